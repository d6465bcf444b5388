#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmloc/measurement.hpp"
#include "dmloc/scenario.hpp"
#include "dmloc/spa.hpp"
#include "dmloc/wire.hpp"

namespace dmloc {

// Chain time t carries the measurements of trajectory sample t - 1; the prior
// handed to the head for the first step has time index 0.
inline int chain_time(int trajectory_index) { return trajectory_index + 1; }
inline int trajectory_index(int chain_time) { return chain_time - 1; }

enum class Stage { kAgentPredict, kInterPanel, kUpdate, kForward, kAnchorPredict };
const char *to_string(Stage s);

struct TraceEvent {
  int panel_id = 0;
  int time_index = 0;
  Stage stage = Stage::kUpdate;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
};

/// One panel of the daisy chain: its anchors, their beliefs and the local
/// SPA stages. Not thread-safe; a node is driven by exactly one thread.
class PanelNode {
 public:
  PanelNode(const Scenario &scn, const Panel &panel, const FilterConfig &cfg, std::uint64_t seed,
            std::uint32_t run, int n_panels);

  int panel_id() const { return panel_.id; }
  bool is_head() const { return panel_.id == 1; }
  bool is_tail() const { return panel_.id == n_panels_; }
  /// Chain time the node will produce next.
  int next_time() const { return next_time_; }

  /// True if a frame with this time index was already consumed.
  bool is_duplicate(int incoming_time) const;

  /// Runs the local stages on an incoming message and returns gamma for the
  /// next panel. The head expects the belief of time t - 1, other panels the
  /// gamma of time t. Throws ProtocolError on a time index from the future.
  ParticleCloud process(const ParticleCloud &incoming, const MeasurementSet &meas);

  /// Anchor prediction for the next step. Off the agent's critical path, so
  /// it runs after the outgoing message has been handed off.
  void prepare_next();

  const std::vector<AnchorBelief> &anchors() const { return beliefs_; }
  const std::vector<AnchorGeometry> &anchor_geometry() const { return geometry_; }
  const FilterConfig &config() const { return cfg_; }
  std::vector<int> detected_ids() const;

  std::vector<TraceEvent> take_trace();
  void record(Stage stage, int time_index, std::int64_t start_ns, std::int64_t end_ns);

 private:
  StreamKey key(int time, Purpose purpose, std::uint32_t slot = 0) const;

  Panel panel_;
  int n_panels_;
  FilterConfig cfg_;
  LikelihoodModel model_;
  std::uint64_t seed_;
  std::uint32_t run_;
  std::vector<AnchorGeometry> geometry_;
  std::vector<AnchorBelief> beliefs_;
  int anchor_time_ = 0;  // time the anchor beliefs are predicted to
  int next_time_ = 1;
  std::vector<TraceEvent> trace_;
};

std::int64_t now_ns();

std::vector<std::unique_ptr<PanelNode>> build_nodes(const Scenario &scn, const FilterConfig &cfg,
                                                    std::uint64_t seed, std::uint32_t run);

/// Prior belief f(x_0): uniform over the room, keyed (seed, run, 0, 0, init).
ParticleCloud initial_belief(const Scenario &scn, const FilterConfig &cfg, std::uint64_t seed,
                             std::uint32_t run);

struct TimestepResult {
  int time_index = 0;
  ParticleCloud belief;  // float32-quantized tail output
  Estimate estimate;     // MMSE of `belief`; detected ids across all panels
  std::vector<int> detected;
  std::vector<std::vector<AnchorBelief>> anchors;  // per panel, in chain order
  std::vector<TraceEvent> trace;
  std::size_t messages = 0;  // chain hops carrying the agent message
};

class TimestepAborted : public std::runtime_error {
 public:
  TimestepAborted(int time_index, int panel_id, const std::string &what)
      : std::runtime_error(what), time_index_(time_index), panel_id_(panel_id) {}
  int time_index() const { return time_index_; }
  /// Panel that reported the failure, 0 if unknown.
  int panel_id() const { return panel_id_; }

 private:
  int time_index_;
  int panel_id_;
};

enum class TransportKind { kInProcess, kSocket };

class Transport {
 public:
  virtual ~Transport() = default;
  virtual TimestepResult run_timestep(const ParticleCloud &prev_belief,
                                      const std::vector<MeasurementSet> &measurements) = 0;
  virtual std::size_t n_panels() const = 0;
};

/// Panels called one after another in the calling thread. Messages still go
/// through encode/decode so results match the socket transport bit for bit.
class InProcessChain : public Transport {
 public:
  explicit InProcessChain(std::vector<std::unique_ptr<PanelNode>> nodes);
  TimestepResult run_timestep(const ParticleCloud &prev_belief,
                              const std::vector<MeasurementSet> &measurements) override;
  std::size_t n_panels() const override { return nodes_.size(); }
  PanelNode &node(std::size_t i) { return *nodes_.at(i); }

 private:
  std::vector<std::unique_ptr<PanelNode>> nodes_;
};

std::unique_ptr<Transport> make_transport(TransportKind kind, const Scenario &scn,
                                          const FilterConfig &cfg, std::uint64_t seed,
                                          std::uint32_t run);

/// Telemetry frame sent after every chain message: ids of anchors detected
/// so far along the chain at this time index.
struct DetectionTrailer {
  std::uint32_t time_index = 0;
  std::vector<std::uint32_t> anchor_ids;
};
std::vector<std::uint8_t> encode_trailer(const DetectionTrailer &t);
DetectionTrailer decode_trailer(std::span<const std::uint8_t> bytes);

/// One JSON line per estimate: {time, x, y, vx, vy, detected}.
std::string estimate_json_line(int time_index, const Estimate &est, const std::vector<int> &detected);

}  // namespace dmloc

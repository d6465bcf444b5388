#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dmloc/chain.hpp"
#include "dmloc/net.hpp"

namespace dmloc {

/// Out-of-band failure report sent straight to the collector. Never travels
/// along the chain itself.
struct ErrorReport {
  std::uint32_t time_index = 0;
  std::uint16_t panel_id = 0;
  std::string what;
};
inline constexpr std::uint32_t kErrorMagic = 0x52454D44;  // "DMER"
std::vector<std::uint8_t> encode_error(const ErrorReport &e);
bool is_error_frame(std::span<const std::uint8_t> bytes);
ErrorReport decode_error(std::span<const std::uint8_t> bytes);

using MeasurementSource = std::function<MeasurementSet(int chain_time)>;

struct ServerOptions {
  Endpoint bind;
  Endpoint next;
  std::optional<Endpoint> collector;  // where error reports go
  std::chrono::milliseconds recv_timeout{30000};
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(50),
                                                 std::chrono::milliseconds(100),
                                                 std::chrono::milliseconds(200)};
};

/// TCP front end of one PanelNode. Each accepted upstream connection delivers
/// pairs of frames (chain message, detection trailer); the node's output goes
/// to `next` with the same framing.
class PanelServer {
 public:
  PanelServer(std::unique_ptr<PanelNode> node, MeasurementSource source, ServerOptions opts);
  ~PanelServer();
  PanelServer(const PanelServer &) = delete;
  PanelServer &operator=(const PanelServer &) = delete;

  Endpoint endpoint() const;
  void set_next(const Endpoint &next);
  void start();
  /// Blocks in the calling thread until stop().
  void run();
  void stop();

  /// Posterior anchor beliefs of the last processed time index.
  std::vector<AnchorBelief> last_anchors() const;
  std::vector<TraceEvent> take_trace();
  int panel_id() const { return panel_id_; }

 private:
  void serve_connection(Socket &upstream);
  void handle(std::span<const std::uint8_t> frame, std::span<const std::uint8_t> trailer);
  void forward(std::span<const std::uint8_t> frame, std::span<const std::uint8_t> trailer,
               std::uint32_t time_index);
  void report(std::uint32_t time_index, const std::string &what);

  std::unique_ptr<PanelNode> node_;
  int panel_id_;
  MeasurementSource source_;
  ServerOptions opts_;
  Listener listener_;
  Socket downstream_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
  mutable std::mutex mu_;
  std::vector<AnchorBelief> last_anchors_;
  std::vector<TraceEvent> trace_;
};

/// Consumer of the tail output. Sends the previous belief to the head and
/// waits for the tail's message plus trailer, or for an error report.
class Collector {
 public:
  Collector(const Endpoint &bind, std::chrono::milliseconds timeout);
  Endpoint endpoint() const;
  void set_head(const Endpoint &head) { head_ = head; }

  struct Output {
    ParticleCloud belief;  // already float32-quantized
    std::vector<int> detected;
  };
  /// Throws TimestepAborted on error report, link failure or timeout.
  Output exchange(const ParticleCloud &prev_belief);

 private:
  Listener listener_;
  Endpoint head_;
  Socket head_link_;
  std::vector<Socket> inbound_;
  std::chrono::milliseconds timeout_;
};

/// Loopback chain: one PanelServer thread per panel plus an in-thread
/// collector. Same numerical results as InProcessChain.
class SocketChain : public Transport {
 public:
  SocketChain(const Scenario &scn, const FilterConfig &cfg, std::uint64_t seed, std::uint32_t run,
              std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));
  ~SocketChain() override;

  TimestepResult run_timestep(const ParticleCloud &prev_belief,
                              const std::vector<MeasurementSet> &measurements) override;
  std::size_t n_panels() const override { return servers_.size(); }

  /// Fault injection: stops the server of the panel at chain index i.
  void kill_panel(std::size_t i);

 private:
  std::vector<std::unique_ptr<PanelServer>> servers_;
  double p_de_;
  std::unique_ptr<Collector> collector_;
  std::mutex mu_;
  std::vector<MeasurementSet> current_;
  int current_time_ = 0;
};

}  // namespace dmloc

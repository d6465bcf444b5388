#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmloc/chain.hpp"
#include "dmloc/latency.hpp"
#include "dmloc/scenario.hpp"
#include "dmloc/spa.hpp"

namespace dmloc {

inline constexpr int kDefaultRuns = 20;
inline constexpr double kDivergenceThreshold_m = 5.0;
inline const std::vector<int> kPanelGrid = {2, 4, 8, 12, 24, 48};
inline const std::vector<int> kArrayGrid = {25, 49, 100, 144, 289};
inline const std::vector<int> kParticleGrid = {2048, 4096, 8192, 16384};
inline const std::vector<double> kBandwidthGrid = {40e6, 400e6};

struct StepRecord {
  int time_index = 0;  // chain time, 1-based
  Point2 truth;
  AgentState estimate;
  std::vector<double> r_prob;        // PA existence per panel, chain order
  std::vector<int> detected;         // anchor ids with r > p_de
  std::vector<std::size_t> n_meas;   // measurements per panel
  std::vector<std::size_t> anchors;  // anchors per panel

  double error() const { return distance(truth, estimate.p); }
};

struct RunResult {
  std::uint32_t run_id = 0;
  std::vector<StepRecord> steps;
  bool diverged = false;  // final-step error above the threshold, or aborted
  std::string error;      // non-empty when the run aborted

  double final_error() const;
};

struct MonteCarloOptions {
  int n_steps = 0;  // 0: the whole trajectory
  TransportKind transport = TransportKind::kInProcess;
  unsigned threads = 0;  // 0: hardware concurrency
};

RunResult run_single(const Scenario &scn, const FilterConfig &cfg, std::uint32_t run,
                     std::uint64_t seed, const MonteCarloOptions &opts = {});

/// Runs 0..n_runs-1, each on its own keyed streams. Results are ordered by
/// run id and do not depend on the thread count.
std::vector<RunResult> run_monte_carlo(const Scenario &scn, const FilterConfig &cfg, int n_runs,
                                       std::uint64_t seed, const MonteCarloOptions &opts = {});

struct ErrorBand {
  std::vector<double> rmse;
  std::vector<double> q10;
  std::vector<double> q90;
};

/// Linear-interpolation sample quantile (R type 7) of unsorted data.
double sample_quantile(std::vector<double> data, double q);

/// Per-step RMSE over runs with the [10 %, 90 %] quantiles of per-run errors.
/// Steps beyond the shortest run are dropped.
ErrorBand rmse_over_time(const std::vector<RunResult> &results);

/// RMS of all (run, step) error samples pooled together.
double rmse_scalar(const std::vector<RunResult> &results);

std::size_t divergence_count(const std::vector<RunResult> &results);

/// Mean critical-path latency per timestep using the observed measurement
/// and anchor counts.
double mean_chain_latency(const std::vector<RunResult> &results, std::size_t n_particles,
                          const LatencyParams &params);

struct SweepSpec {
  nlohmann::json scenario = nlohmann::json::object();  // base scenario document
  nlohmann::json filter = nlohmann::json::object();
  std::vector<int> panels = {4};
  std::vector<int> array_elements = {25};
  std::vector<int> particles = {4096};
  std::vector<double> bandwidths = {400e6};
  std::vector<Mode> modes = {Mode::kLoS};
  int n_runs = kDefaultRuns;
  std::uint64_t seed = 1;
  int n_steps = 0;
  LatencyParams latency;
  unsigned threads = 0;

  void validate() const;
};

SweepSpec parse_sweep_spec(const nlohmann::json &doc,
                           const std::filesystem::path &base_dir = {});

struct SweepRow {
  int panels = 0;
  int array_elements = 0;
  int particles = 0;
  double bandwidth_hz = 0.0;
  Mode mode = Mode::kLoS;
  double rmse = 0.0;
  double q10 = 0.0;
  double q90 = 0.0;
  std::size_t diverged = 0;
  double mean_chain_latency_s = 0.0;
  std::string status = "ok";
};

/// Scenario for one grid point: panels re-placed, square array of
/// `array_elements`, bandwidth overridden.
Scenario sweep_point_scenario(const SweepSpec &spec, int panels, int array_elements,
                              double bandwidth_hz);

std::vector<SweepRow> run_sweep(const SweepSpec &spec, std::ostream *progress = nullptr);

/// RFC 4180 quoting.
std::string csv_field(const std::string &s);
void write_sweep_csv(std::ostream &out, const std::vector<SweepRow> &rows);
void write_band_csv(std::ostream &out, const ErrorBand &band);
/// One row per (run, step): truth, estimate, error and per-panel r_prob.
void write_runs_csv(std::ostream &out, const std::vector<RunResult> &results);

}  // namespace dmloc

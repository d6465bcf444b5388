#pragma once

#include <cstddef>
#include <vector>

#include "json.hpp"

namespace dmloc {

/// Cycle-count cost profile of one panel plus the link between panels. The
/// defaults are an illustrative profile, not measured hardware numbers.
struct LatencyParams {
  double clock_hz = 250e6;
  double cycles_predict_per_particle = 1.0;
  double cycles_update_per_particle_per_meas = 2.0;
  double cycles_resample_per_particle = 2.0;
  double cycles_fixed_per_panel = 2000.0;
  double link_bits_per_s = 10e9;
  double link_fixed_s = 2e-6;

  void validate() const;
};

LatencyParams parse_latency_params(const nlohmann::json &doc);
nlohmann::json latency_params_to_json(const LatencyParams &p);

struct LatencyReport {
  std::vector<double> panel_s;  // per panel compute time
  std::vector<double> link_s;   // J-1 panel links followed by the loopback link
  double total_s = 0.0;
};

/// (fixed + N (predict + resample) + N (M + 1) update) / clock.
double panel_latency(std::size_t n_particles, std::size_t n_meas, const LatencyParams &p);

/// 8 (20 N + 20) / rate + fixed: one encoded chain message.
double link_latency(std::size_t n_particles, const LatencyParams &p);

/// Critical path of one timestep. `n_meas` holds the measurement count per
/// panel; `anchors_per_panel` (optional, default 1) multiplies the update
/// and resample work when a panel tracks several anchors.
LatencyReport chain_latency(std::size_t n_panels, const std::vector<std::size_t> &n_meas,
                            std::size_t n_particles, const LatencyParams &p,
                            const std::vector<std::size_t> &anchors_per_panel = {});

}  // namespace dmloc

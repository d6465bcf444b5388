#include "dmloc/latency.hpp"

#include <stdexcept>

#include "dmloc/scenario.hpp"

namespace dmloc {

void LatencyParams::validate() const {
  if (!(clock_hz > 0.0)) throw ConfigError("clock_hz must be positive");
  if (!(link_bits_per_s > 0.0)) throw ConfigError("link_bits_per_s must be positive");
  for (double v : {cycles_predict_per_particle, cycles_update_per_particle_per_meas,
                   cycles_resample_per_particle, cycles_fixed_per_panel, link_fixed_s})
    if (!(v >= 0.0)) throw ConfigError("latency coefficients must be non-negative");
}

LatencyParams parse_latency_params(const nlohmann::json &doc) {
  require_known_keys(doc,
                     {"clock_hz", "cycles_predict_per_particle",
                      "cycles_update_per_particle_per_meas", "cycles_resample_per_particle",
                      "cycles_fixed_per_panel", "link_bits_per_s", "link_fixed_s"},
                     "");
  LatencyParams p;
  p.clock_hz = doc.value("clock_hz", p.clock_hz);
  p.cycles_predict_per_particle =
      doc.value("cycles_predict_per_particle", p.cycles_predict_per_particle);
  p.cycles_update_per_particle_per_meas =
      doc.value("cycles_update_per_particle_per_meas", p.cycles_update_per_particle_per_meas);
  p.cycles_resample_per_particle =
      doc.value("cycles_resample_per_particle", p.cycles_resample_per_particle);
  p.cycles_fixed_per_panel = doc.value("cycles_fixed_per_panel", p.cycles_fixed_per_panel);
  p.link_bits_per_s = doc.value("link_bits_per_s", p.link_bits_per_s);
  p.link_fixed_s = doc.value("link_fixed_s", p.link_fixed_s);
  p.validate();
  return p;
}

nlohmann::json latency_params_to_json(const LatencyParams &p) {
  return {{"clock_hz", p.clock_hz},
          {"cycles_predict_per_particle", p.cycles_predict_per_particle},
          {"cycles_update_per_particle_per_meas", p.cycles_update_per_particle_per_meas},
          {"cycles_resample_per_particle", p.cycles_resample_per_particle},
          {"cycles_fixed_per_panel", p.cycles_fixed_per_panel},
          {"link_bits_per_s", p.link_bits_per_s},
          {"link_fixed_s", p.link_fixed_s}};
}

double panel_latency(std::size_t n_particles, std::size_t n_meas, const LatencyParams &p) {
  const double n = static_cast<double>(n_particles);
  const double m1 = static_cast<double>(n_meas) + 1.0;
  const double cycles = p.cycles_fixed_per_panel +
                        n * (p.cycles_predict_per_particle + p.cycles_resample_per_particle) +
                        n * m1 * p.cycles_update_per_particle_per_meas;
  return cycles / p.clock_hz;
}

double link_latency(std::size_t n_particles, const LatencyParams &p) {
  const double bytes = 20.0 * static_cast<double>(n_particles) + 20.0;
  return 8.0 * bytes / p.link_bits_per_s + p.link_fixed_s;
}

LatencyReport chain_latency(std::size_t n_panels, const std::vector<std::size_t> &n_meas,
                            std::size_t n_particles, const LatencyParams &p,
                            const std::vector<std::size_t> &anchors_per_panel) {
  if (n_meas.size() != n_panels) throw std::invalid_argument("need one n_meas per panel");
  if (!anchors_per_panel.empty() && anchors_per_panel.size() != n_panels)
    throw std::invalid_argument("need one anchor count per panel");
  LatencyReport r;
  for (std::size_t j = 0; j < n_panels; ++j) {
    const std::size_t k = anchors_per_panel.empty() ? 1 : anchors_per_panel[j];
    double s = panel_latency(n_particles, n_meas[j], p);
    if (k > 1) {
      // Extra anchors repeat the update and the agent resample, not the prediction.
      LatencyParams extra = p;
      extra.cycles_fixed_per_panel = 0.0;
      extra.cycles_predict_per_particle = 0.0;
      s += static_cast<double>(k - 1) * panel_latency(n_particles, n_meas[j], extra);
    }
    r.panel_s.push_back(s);
  }
  r.link_s.assign(n_panels, link_latency(n_particles, p));
  for (double s : r.panel_s) r.total_s += s;
  for (double s : r.link_s) r.total_s += s;
  return r;
}

}  // namespace dmloc

#include "dmloc/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

#include "dmloc/special_functions.hpp"

namespace dmloc {

namespace {
constexpr double kPi = std::numbers::pi;
}

const char *to_string(PathKind kind) {
  switch (kind) {
    case PathKind::kLoS:
      return "los";
    case PathKind::kReflection:
      return "reflection";
    case PathKind::kFalseAlarm:
      return "false_alarm";
  }
  return "unknown";
}

NoiseModel noise_model(const Scenario &scn) {
  return {scn.radio, scn.measurement.reflection_loss_db, scn.measurement.aoa_floor};
}

double path_amplitude(double d, bool is_reflection, const RadioConfig &radio, double loss_db) {
  if (!(d > 0.0)) throw std::invalid_argument("path_amplitude requires d > 0");
  double snr_db = radio.snr_ref_db + 10.0 * std::log10(radio.n_elements()) - 20.0 * std::log10(d);
  if (is_reflection) snr_db -= loss_db;
  return std::sqrt(std::pow(10.0, snr_db / 10.0));
}

double range_std(double u, double bandwidth_hz) {
  return std::sqrt(1.5) * kSpeedOfLight / (kPi * bandwidth_hz * u);
}

double array_rms_aperture(const RadioConfig &radio) {
  const double m = radio.array_side;
  return radio.element_spacing_m * std::sqrt((m * m - 1.0) / 12.0);
}

double aoa_std(double u, const RadioConfig &radio, double incidence, double aoa_floor) {
  const double aperture = array_rms_aperture(radio);
  if (aperture <= 0.0) return std::numeric_limits<double>::infinity();
  const double cos_factor = std::max(std::abs(std::cos(incidence)), aoa_floor);
  return radio.wavelength() / (2.0 * std::sqrt(2.0) * kPi * u * cos_factor * aperture);
}

double detection_mass(double u, double u_th) {
  if (u < 0.0) throw std::invalid_argument("amplitude must be non-negative");
  const double a = std::min(std::sqrt(2.0) * u, 50.0);
  const double b = std::sqrt(2.0) * u_th;
  if (b > 50.0) return 0.0;
  return marcum_q1(a, b);
}

double detection_prob(double u, double u_th) {
  return std::min(detection_mass(u, u_th), kMaxDetectionProb);
}

double amplitude_likelihood(double z, double u, double u_th) {
  if (z < u_th) throw std::invalid_argument("amplitude below detection threshold");
  const double s = z - u;
  return 2.0 * z * std::exp(-s * s) * bessel_i0e(2.0 * u * z) / detection_mass(u, u_th);
}

double fa_amplitude_density(double z, double u_th) {
  if (z < u_th) throw std::invalid_argument("amplitude below detection threshold");
  return 2.0 * z * std::exp(-(z * z - u_th * u_th));
}

DetectionTable::DetectionTable(double u_th) : u_th_(u_th) {
  const double u_max = u_th + 8.0;
  const auto n = static_cast<std::size_t>(std::ceil(u_max / step_)) + 1;
  prob_.resize(n);
  mass_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    mass_[i] = detection_mass(i * step_, u_th);
    prob_[i] = std::min(mass_[i], kMaxDetectionProb);
    log_.push_back({std::log(prob_[i]), std::log1p(-prob_[i]), std::log(mass_[i])});
  }
}

DetectionTable::LogTerms DetectionTable::log_terms(double u) const {
  if (!(u > 0.0)) return log_.front();
  const double pos = u / step_;
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= log_.size())
    return {std::log(kMaxDetectionProb), std::log1p(-kMaxDetectionProb), 0.0};
  const double f = pos - static_cast<double>(i);
  const LogTerms &a = log_[i];
  const LogTerms &b = log_[i + 1];
  return {a.log_pd + f * (b.log_pd - a.log_pd), a.log_miss + f * (b.log_miss - a.log_miss),
          a.log_mass + f * (b.log_mass - a.log_mass)};
}

double DetectionTable::lookup(const std::vector<double> &table, double u, double beyond) const {
  if (!(u > 0.0)) return table.front();
  const double pos = u / step_;
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= table.size()) return beyond;
  const double f = pos - static_cast<double>(i);
  return table[i] + f * (table[i + 1] - table[i]);
}

const DetectionTable &DetectionTable::get(double u_th) {
  static std::mutex mu;
  static std::map<double, std::unique_ptr<DetectionTable>> cache;
  std::lock_guard lock(mu);
  auto &slot = cache[u_th];
  if (!slot) slot = std::make_unique<DetectionTable>(u_th);
  return *slot;
}

double sample_truncated_rician(double u, double u_th, CounterRng &rng) {
  // Rice(nu = u, sigma^2 = 1/2) restricted to [u_th, inf) by rejection.
  const double sd = std::sqrt(0.5);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double re = u + rng.normal(0.0, sd);
    const double im = rng.normal(0.0, sd);
    const double z = std::hypot(re, im);
    if (z >= u_th) return z;
  }
  return sample_truncated_rayleigh(u_th, rng);
}

double sample_truncated_rayleigh(double u_th, CounterRng &rng) {
  const double v = 1.0 - rng.uniform();  // (0, 1]
  return std::sqrt(u_th * u_th - std::log(v));
}

MeasurementSet synthesize_panel(const Scenario &scn, const Panel &panel, int n, std::uint64_t seed,
                                std::uint32_t run) {
  const TrajectoryPoint &truth = scn.trajectory.at(n);
  const std::vector<Wall> walls = scn.all_walls();
  const MeasurementParams &mp = scn.measurement;
  const double u_th = mp.clutter.u_th;
  const DetectionTable &table = DetectionTable::get(u_th);

  CounterRng rng(StreamKey{seed, run, static_cast<std::uint32_t>(n),
                           static_cast<std::uint32_t>(panel.id), Purpose::kSynthesis, 0});

  MeasurementSet set;
  set.panel_id = panel.id;
  set.time_index = n;

  auto emit_path = [&](double d_true, Point2 arrival_from, bool reflection) {
    const double u_true = path_amplitude(d_true, reflection, scn.radio, mp.reflection_loss_db);
    const double phi_true = aoa_at_panel(panel.pos, panel.orientation, arrival_from);
    const bool detected = mp.force_detection || rng.uniform() < table.prob(u_true);
    if (!detected) return;
    Measurement m;
    if (mp.noise_free) {
      m = {d_true, phi_true, std::max(u_true, u_th)};
    } else {
      const double sd_d = range_std(u_true, scn.radio.bandwidth_hz);
      const double sd_phi = aoa_std(u_true, scn.radio, phi_true, mp.aoa_floor);
      m.d = std::max(0.0, rng.normal(d_true, sd_d));
      m.aoa = std::isfinite(sd_phi) ? wrap_angle(rng.normal(phi_true, sd_phi))
                                    : wrap_angle(rng.uniform(-kPi, kPi));
      m.u = sample_truncated_rician(u_true, u_th, rng);
    }
    set.items.push_back(m);
    set.kinds.push_back(reflection ? PathKind::kReflection : PathKind::kLoS);
  };

  if (los_visible(truth.p, panel.pos, walls))
    emit_path(distance(truth.p, panel.pos), truth.p, false);

  for (const Wall &w : walls) {
    if (!w.reflective) continue;
    if (auto path = single_bounce_path(truth.p, panel.pos, w, walls))
      emit_path(path->d, path->reflection_point, true);
  }

  if (mp.clutter.mu_fa > 0.0) {
    std::poisson_distribution<int> count(mp.clutter.mu_fa);
    const int n_fa = count(rng);
    for (int k = 0; k < n_fa; ++k) {
      Measurement m;
      m.d = rng.uniform(0.0, mp.clutter.d_max);
      m.aoa = rng.uniform(-kPi / 2, kPi / 2);
      m.u = sample_truncated_rayleigh(u_th, rng);
      set.items.push_back(m);
      set.kinds.push_back(PathKind::kFalseAlarm);
    }
  }

  // Fisher-Yates on both vectors with the same draws.
  for (std::size_t i = set.items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(set.items[i - 1], set.items[std::min(j, i - 1)]);
    std::swap(set.kinds[i - 1], set.kinds[std::min(j, i - 1)]);
  }
  return set;
}

std::vector<MeasurementSet> synthesize_timestep(const Scenario &scn, int n, std::uint64_t seed,
                                                std::uint32_t run) {
  std::vector<MeasurementSet> sets;
  sets.reserve(scn.panels.size());
  for (const Panel &p : scn.panels) sets.push_back(synthesize_panel(scn, p, n, seed, run));
  return sets;
}

void write_measurements_csv_header(std::ostream &out) { out << "run,time,panel,kind,d,aoa,u\n"; }

void write_measurements_csv(std::ostream &out, std::uint32_t run, const MeasurementSet &set) {
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    const Measurement &m = set.items[i];
    out << run << ',' << set.time_index << ',' << set.panel_id << ',' << to_string(set.kinds[i])
        << ',' << m.d << ',' << m.aoa << ',' << m.u << '\n';
  }
}

}  // namespace dmloc

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "dmloc/rng.hpp"
#include "dmloc/scenario.hpp"

namespace dmloc {

/// One estimated multipath component: distance, angle of arrival (panel frame)
/// and normalized amplitude (square root of the component SNR).
struct Measurement {
  double d = 0.0;
  double aoa = 0.0;
  double u = 0.0;
};

/// Origin of a synthesized item. Debug-only: the filter never reads it.
enum class PathKind : std::uint8_t { kLoS, kReflection, kFalseAlarm };

const char *to_string(PathKind kind);

struct MeasurementSet {
  int panel_id = 0;
  int time_index = 0;
  std::vector<Measurement> items;
  std::vector<PathKind> kinds;  // parallel to items

  std::size_t size() const { return items.size(); }
};

struct NoiseModel {
  RadioConfig radio;
  double reflection_loss_db = 6.0;
  double aoa_floor = 0.1;
};

NoiseModel noise_model(const Scenario &scn);

/// Free-space amplitude model: snr_ref per element at 1 m, array gain N_a,
/// 20 log10(d) path loss and an extra loss for reflections.
double path_amplitude(double d, bool is_reflection, const RadioConfig &radio, double loss_db);

/// Range standard deviation from the flat-spectrum Fisher information.
double range_std(double u, double bandwidth_hz);

/// RMS element offset along the array's horizontal axis.
double array_rms_aperture(const RadioConfig &radio);

/// AoA standard deviation; +inf for a single-column array (no aperture).
double aoa_std(double u, const RadioConfig &radio, double incidence, double aoa_floor);

inline constexpr double kMaxDetectionProb = 0.999;

/// Rician detection probability Q1(sqrt2 u, sqrt2 u_th), clamped to 0.999.
double detection_prob(double u, double u_th);

/// Unclamped Q1(sqrt2 u, sqrt2 u_th); the normalizer of the truncated Rician.
double detection_mass(double u, double u_th);

/// Truncated Rician amplitude density f(z | u) on [u_th, inf).
double amplitude_likelihood(double z, double u, double u_th);

/// Truncated Rayleigh false-alarm amplitude density on [u_th, inf).
double fa_amplitude_density(double z, double u_th);

/// Tabulated detection probability for a fixed threshold. Exact values are
/// too expensive for per-particle evaluation; linear interpolation on a
/// 0.005 grid keeps the error well below 1e-5.
class DetectionTable {
 public:
  explicit DetectionTable(double u_th);

  double u_th() const { return u_th_; }
  double prob(double u) const { return lookup(prob_, u, kMaxDetectionProb); }
  double mass(double u) const { return lookup(mass_, u, 1.0); }

  struct LogTerms {
    double log_pd;    // log p_d(u)
    double log_miss;  // log (1 - p_d(u))
    double log_mass;  // log of the truncated-Rician normalizer
  };
  /// Interpolated logs with a single index computation (hot path).
  LogTerms log_terms(double u) const;

  /// Shared instance per threshold; thread-safe.
  static const DetectionTable &get(double u_th);

 private:
  double lookup(const std::vector<double> &table, double u, double beyond) const;

  double u_th_;
  double step_ = 0.005;
  std::vector<double> prob_;
  std::vector<double> mass_;
  std::vector<LogTerms> log_;
};

double sample_truncated_rician(double u, double u_th, CounterRng &rng);
double sample_truncated_rayleigh(double u_th, CounterRng &rng);

/// Noisy MPC estimates for every panel at trajectory index n. The random
/// stream of panel j is keyed (seed, run, n, j, synthesis), so any process can
/// regenerate exactly the set another process would see.
std::vector<MeasurementSet> synthesize_timestep(const Scenario &scn, int n, std::uint64_t seed,
                                                std::uint32_t run);

/// Single panel variant of synthesize_timestep.
MeasurementSet synthesize_panel(const Scenario &scn, const Panel &panel, int n,
                                std::uint64_t seed, std::uint32_t run);

/// CSV dump: run,time,panel,kind,d,aoa,u
void write_measurements_csv_header(std::ostream &out);
void write_measurements_csv(std::ostream &out, std::uint32_t run, const MeasurementSet &set);

}  // namespace dmloc

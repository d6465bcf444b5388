#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dmloc/geometry.hpp"
#include "dmloc/measurement.hpp"
#include "dmloc/rng.hpp"
#include "dmloc/scenario.hpp"

namespace dmloc {

/// Which anchors a panel exploits: its own LoS only, or LoS plus the
/// single-bounce paths of known virtual anchors.
enum class Mode { kLoS, kMPC };

const char *to_string(Mode mode);
Mode parse_mode(const std::string &text);

/// Role of a particle cloud in the message schedule.
enum class MessageRole { kAlpha, kGamma, kBelief };

struct AgentState {
  Point2 p;
  Vec2 v;
};

/// Weighted agent-state particles. Weights are kept in the log domain.
struct ParticleCloud {
  std::vector<AgentState> states;
  std::vector<double> log_weights;
  int time_index = 0;
  int origin_panel = 0;
  MessageRole role = MessageRole::kAlpha;

  std::size_t size() const { return states.size(); }
  double weight(std::size_t i) const;
  std::vector<double> weights() const;
  double weight_sum() const;
  /// Max-shifted log-sum-exp normalization. Throws NumericalDegeneracy if no
  /// particle carries finite weight.
  void normalize();
};

/// Per-anchor LoS state: amplitude particles plus existence probability.
struct AnchorBelief {
  std::vector<double> u;
  std::vector<double> log_weights;
  double r_prob = 0.5;
  int anchor_id = 0;
  Point2 anchor_pos;

  std::size_t size() const { return u.size(); }
  double weight_sum() const;
};

/// Where an anchor is and how a candidate agent position maps to the
/// (distance, AoA) it would produce at the physical panel.
struct AnchorGeometry {
  int anchor_id = 0;
  int panel_id = 0;
  Point2 panel_pos;
  double orientation = 0.0;
  Point2 position;            // the PA itself, or its mirror image for a VA
  std::optional<Wall> mirror;  // set for virtual anchors
  double min_excess = 0.0;     // VA path must be this much longer than LoS, m

  bool is_virtual() const { return mirror.has_value(); }
  /// False when no path from an agent at p can reach the panel through this
  /// anchor: for a VA, p must sit on the panel's side of the mirror wall and
  /// the reflection point must fall inside the wall segment, and the bounce
  /// must be resolvable from the LoS path (excess length >= min_excess).
  bool observable(Point2 p) const;
  /// Expected distance and panel-frame AoA for an agent at p.
  std::pair<double, double> expected(Point2 p) const;
};

/// Anchors handled by one panel: its PA first, then (MPC mode) one VA per
/// reflective wall the PA does not sit on. VA ids are 1000 * (wall + 1) + panel.
/// VAs use half the delay resolution, c / (2 B_w), as their min_excess.
std::vector<AnchorGeometry> panel_anchors(const Scenario &scn, const Panel &panel, Mode mode);

struct MotionModel {
  double dt = 0.1;
  double sigma_acc = 1.0;   // m/s^2, white acceleration
  double sigma_reg = 0.02;  // m, positional jitter between panels
};

struct SpaConfig {
  int n_particles = 4096;
  double p_de = 0.5;
  Mode mode = Mode::kLoS;
  double p_survive = 0.95;
  double p_birth = 0.01;
  double birth_u_min = 0.5;
  double birth_u_max = 20.0;
  double u_walk_std = 0.2;
  double init_velocity_std = 0.5;
  /// Updates whose ESS would fall below this fraction of N are applied in
  /// tempered stages (0 disables).
  double ess_floor = 0.1;

  void validate() const;
};

struct FilterConfig {
  SpaConfig spa;
  MotionModel motion;
};

/// Parses the optional "filter" section of a config document. dt comes from
/// the scenario so the motion model and the trajectory always agree.
FilterConfig parse_filter_config(const nlohmann::json &doc, double dt_s);
nlohmann::json filter_config_to_json(const FilterConfig &cfg);

class NumericalDegeneracy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Measurement model pieces needed to evaluate the PDA pseudo-likelihood.
struct LikelihoodModel {
  NoiseModel noise;
  ClutterParams clutter;
  const DetectionTable *table;
  /// Agent positions outside the room get zero posterior weight.
  std::optional<Room> support;

  LikelihoodModel(NoiseModel noise, ClutterParams clutter);
  static LikelihoodModel from(const Scenario &scn);
};

/// log of the PDA pseudo-likelihood ratio
///   (1 - p_d(u)) + sum_m p_d(u) N(d_m) N(phi_m) f(u_m | u) / (mu_FA f_FA(u_m) U_d U_phi).
double log_pda_likelihood(const AgentState &particle, double u, const MeasurementSet &meas,
                          const AnchorGeometry &anchor, const LikelihoodModel &model);
double pda_likelihood(const AgentState &particle, double u, const MeasurementSet &meas,
                      const AnchorGeometry &anchor, const LikelihoodModel &model);

ParticleCloud init_agent_cloud(const Room &room, const SpaConfig &cfg, CounterRng &rng);
AnchorBelief init_anchor(const AnchorGeometry &anchor, const SpaConfig &cfg, CounterRng &rng);

/// Time prediction with the constant-velocity model (alpha(x_n)).
ParticleCloud predict_agent(const ParticleCloud &prev_belief, const MotionModel &mm,
                            CounterRng &rng);

/// Bernoulli-existence and amplitude random-walk prediction (alpha(y_n)).
AnchorBelief predict_anchor(const AnchorBelief &prev, const SpaConfig &cfg, CounterRng &rng);

/// Prior for the next panel in the chain: positions jittered by sigma_reg.
/// Throws ProtocolError when msg.time_index != expected_time.
ParticleCloud inter_panel_predict(const ParticleCloud &msg, const MotionModel &mm,
                                  CounterRng &rng, int expected_time);

struct UpdateResult {
  ParticleCloud gamma;             // alpha * xi, normalized
  std::vector<double> log_lambda;  // per stacked particle
  std::vector<double> log_kappa;   // kappa(u_i, r = 1), stacked estimate
  std::vector<double> log_xi;      // log(r Lambda + 1 - r), -inf outside the support
  double log_mean_kappa = 0.0;     // weight-averaged kappa
  std::size_t likelihood_evals = 0;
};

/// Stacked-state measurement update: agent particle i is paired with
/// amplitude particle i. Cost is exactly N_p * (M + 1) likelihood terms.
UpdateResult measurement_update(const ParticleCloud &alpha_x, const AnchorBelief &anchor,
                                const AnchorGeometry &geometry, const MeasurementSet &meas,
                                const LikelihoodModel &model);

/// Existence and amplitude belief given the factor-to-anchor message.
AnchorBelief existence_update(const AnchorBelief &anchor, const UpdateResult &update);

/// Systematic resampling indices for normalized linear weights.
std::vector<std::size_t> systematic_resample(const std::vector<double> &weights, CounterRng &rng);

/// Systematic resampling followed by Gaussian jitter of bandwidth
/// N^(-1/6) times the weighted per-dimension standard deviation.
ParticleCloud resample_regularize(const ParticleCloud &cloud, CounterRng &rng);

/// Resampled agent posterior for one anchor. If the weights of `update.gamma`
/// have an ESS below ess_floor * N, the likelihood is applied progressively:
/// each stage takes the largest exponent that keeps the ESS at the floor, then
/// resamples, regularizes and re-evaluates the likelihood at the moved
/// particles. Otherwise this is resample_regularize(update.gamma).
ParticleCloud progressive_update(const ParticleCloud &alpha_x, const UpdateResult &update,
                                 const AnchorBelief &anchor, const AnchorGeometry &geometry,
                                 const MeasurementSet &meas, const LikelihoodModel &model,
                                 double ess_floor, CounterRng &rng);

/// Same scheme for amplitude particles (floored at zero).
AnchorBelief resample_anchor(const AnchorBelief &anchor, CounterRng &rng);

struct Estimate {
  AgentState x;
  std::vector<std::pair<int, double>> detected;  // (anchor_id, amplitude)
};

Estimate mmse_estimates(const ParticleCloud &belief, const std::vector<AnchorBelief> &anchors,
                        double p_de);

}  // namespace dmloc

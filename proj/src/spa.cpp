#include "dmloc/spa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <spdlog/spdlog.h>

#include "dmloc/special_functions.hpp"

namespace dmloc {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double> &v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

void normalize_log_weights(std::vector<double> &lw) {
  const double lse = log_sum_exp(lw);
  if (!std::isfinite(lse)) throw NumericalDegeneracy("particle weights are all zero or non-finite");
  for (double &x : lw) x -= lse;
}

// Angle difference folded into (-pi, pi] for inputs already in (-pi, pi].
double angle_diff(double a, double b) {
  double d = a - b;
  if (d > kPi) d -= 2.0 * kPi;
  else if (d <= -kPi) d += 2.0 * kPi;
  return d;
}

// Per-measurement constants of the PDA likelihood ratio; everything that does
// not depend on the particle is folded in here once per update.
struct MeasTerm {
  double d;
  double aoa;
  double nh_inv_var_d;    // -1 / (2 sigma_d^2)
  double nh_inv_var_phi;  // -1 / (2 sigma_phi^2), 0 if AoA carries no information
  double log_const;
  double z;
  double amp_bound;  // upper bound of the log amplitude factor
};

std::vector<MeasTerm> prepare_terms(const MeasurementSet &meas, const LikelihoodModel &model) {
  const ClutterParams &c = model.clutter;
  const double log_clutter =
      std::log(std::max(c.mu_fa, 1e-12)) - std::log(c.d_max) - std::log(kPi);
  const double half_log_2pi = 0.5 * std::log(2.0 * kPi);
  std::vector<MeasTerm> terms;
  terms.reserve(meas.size());
  for (const Measurement &m : meas.items) {
    const double z = std::max(m.u, 1e-12);
    const double sd_d = range_std(z, model.noise.radio.bandwidth_hz);
    const double sd_phi = aoa_std(z, model.noise.radio, m.aoa, model.noise.aoa_floor);
    MeasTerm t;
    t.d = m.d;
    t.aoa = m.aoa;
    t.z = z;
    t.nh_inv_var_d = -0.5 / (sd_d * sd_d);
    double log_norm = -half_log_2pi - std::log(sd_d);
    if (std::isfinite(sd_phi)) {
      t.nh_inv_var_phi = -0.5 / (sd_phi * sd_phi);
      log_norm += -half_log_2pi - std::log(sd_phi);
    } else {
      t.nh_inv_var_phi = 0.0;
      log_norm += -std::log(2.0 * kPi);
    }
    const double u_th = c.u_th;
    t.log_const = log_norm + (z * z - u_th * u_th) - log_clutter;
    t.amp_bound = u_th * u_th;
    terms.push_back(t);
  }
  return terms;
}

using AmplitudeTerms = DetectionTable::LogTerms;

AmplitudeTerms amplitude_terms(double u, const LikelihoodModel &model) {
  return model.table->log_terms(u);
}

double evaluate_log_lambda(Point2 p, double u, const AmplitudeTerms &amp,
                           const std::vector<MeasTerm> &terms, const AnchorGeometry &anchor,
                           std::vector<double> &scratch) {
  if (!anchor.observable(p)) return 0.0;
  if (terms.empty()) return amp.log_miss;
  const auto [d_i, phi_i] = anchor.expected(p);
  scratch.resize(terms.size() + 1);
  scratch[0] = amp.log_miss;
  double mx = amp.log_miss;
  for (std::size_t m = 0; m < terms.size(); ++m) {
    const MeasTerm &t = terms[m];
    const double dd = t.d - d_i;
    const double dphi = angle_diff(t.aoa, phi_i);
    const double geo = amp.log_pd + t.log_const + t.nh_inv_var_d * dd * dd +
                       t.nh_inv_var_phi * dphi * dphi;
    // The amplitude factor is bounded by exp(u_th^2); terms that cannot reach
    // within e^-40 of the running maximum are dropped without evaluating it.
    if (geo + t.amp_bound < mx - 40.0) {
      scratch[m + 1] = -std::numeric_limits<double>::infinity();
      continue;
    }
    const double dz = t.z - u;
    const double v = geo - dz * dz + std::log(bessel_i0e_fast(2.0 * u * t.z)) - amp.log_mass;
    scratch[m + 1] = v;
    mx = std::max(mx, v);
  }
  double s = 0.0;
  for (double v : scratch) s += std::exp(v - mx);
  return mx + std::log(s);
}

template <typename T>
void weighted_moments(const std::vector<T> &values, const std::vector<double> &w, double &mean,
                      double &sd) {
  mean = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) mean += w[i] * values[i];
  double var = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - mean;
    var += w[i] * d * d;
  }
  sd = std::sqrt(std::max(var, 0.0));
}

std::vector<double> linear_weights(const std::vector<double> &log_weights) {
  std::vector<double> w(log_weights.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i]);
    sum += w[i];
  }
  if (!(sum > 0.0) || !std::isfinite(sum))
    throw NumericalDegeneracy("cannot resample: weights are all zero or non-finite");
  for (double &x : w) x /= sum;
  return w;
}

double number_or(const json &obj, const char *key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) throw ConfigError(std::string("filter.") + key + " must be a number");
  return obj.at(key).get<double>();
}

}  // namespace

const char *to_string(Mode mode) { return mode == Mode::kLoS ? "los" : "mpc"; }

Mode parse_mode(const std::string &text) {
  if (text == "los" || text == "LoS" || text == "loca-los") return Mode::kLoS;
  if (text == "mpc" || text == "MPC" || text == "loca-mpc") return Mode::kMPC;
  throw ConfigError("mode must be los or mpc, got '" + text + "'");
}

double ParticleCloud::weight(std::size_t i) const { return std::exp(log_weights[i]); }

std::vector<double> ParticleCloud::weights() const {
  std::vector<double> w(log_weights.size());
  std::transform(log_weights.begin(), log_weights.end(), w.begin(),
                 [](double lw) { return std::exp(lw); });
  return w;
}

double ParticleCloud::weight_sum() const {
  double s = 0.0;
  for (double lw : log_weights) s += std::exp(lw);
  return s;
}

void ParticleCloud::normalize() { normalize_log_weights(log_weights); }

double AnchorBelief::weight_sum() const {
  double s = 0.0;
  for (double lw : log_weights) s += std::exp(lw);
  return s;
}

std::pair<double, double> AnchorGeometry::expected(Point2 p) const {
  const Point2 src = mirror ? mirror_point(p, *mirror) : p;
  return {distance(src, panel_pos), aoa_at_panel(panel_pos, orientation, src)};
}

bool AnchorGeometry::observable(Point2 p) const {
  if (!mirror) return true;
  const Wall &w = *mirror;
  const Vec2 dir = w.b - w.a;
  const double side_p = cross(dir, p - w.a);
  const double side_panel = cross(dir, panel_pos - w.a);
  if (side_p * side_panel <= 0.0) return false;
  // Parameter along the wall where the segment p -> VA crosses it.
  const Vec2 seg = position - p;
  const double denom = cross(seg, dir);
  if (denom == 0.0) return false;
  const double s = cross(w.a - p, seg) / denom;
  if (!(s > 0.0 && s < 1.0)) return false;
  return distance(p, position) - distance(p, panel_pos) >= min_excess;
}

std::vector<AnchorGeometry> panel_anchors(const Scenario &scn, const Panel &panel, Mode mode) {
  std::vector<AnchorGeometry> anchors;
  anchors.push_back({panel.id, panel.id, panel.pos, panel.orientation, panel.pos, std::nullopt});
  if (mode == Mode::kMPC) {
    const std::vector<Wall> walls = scn.all_walls();
    for (std::size_t w = 0; w < walls.size(); ++w) {
      if (!walls[w].reflective) continue;
      const Point2 va = mirror_point(panel.pos, walls[w]);
      if (distance(va, panel.pos) <= 1e-9) continue;
      anchors.push_back({static_cast<int>(1000 * (w + 1)) + panel.id, panel.id, panel.pos,
                         panel.orientation, va, walls[w],
                         kSpeedOfLight / (2.0 * scn.radio.bandwidth_hz)});
    }
  }
  return anchors;
}

void SpaConfig::validate() const {
  if (n_particles < 1) throw ConfigError("filter.n_particles must be at least 1");
  if (!(p_de > 0 && p_de < 1)) throw ConfigError("filter.p_de must be in (0, 1)");
  if (!(p_survive >= 0 && p_survive <= 1)) throw ConfigError("filter.p_survive must be in [0, 1]");
  if (!(p_birth >= 0 && p_birth <= 1)) throw ConfigError("filter.p_birth must be in [0, 1]");
  if (!(birth_u_min >= 0 && birth_u_max > birth_u_min))
    throw ConfigError("filter.birth_u_min/birth_u_max must satisfy 0 <= min < max");
  if (!(u_walk_std >= 0)) throw ConfigError("filter.u_walk_std must be non-negative");
  if (!(init_velocity_std >= 0)) throw ConfigError("filter.init_velocity_std must be non-negative");
  if (!(ess_floor >= 0 && ess_floor < 1)) throw ConfigError("filter.ess_floor must be in [0, 1)");
}

FilterConfig parse_filter_config(const json &doc, double dt_s) {
  FilterConfig cfg;
  cfg.motion.dt = dt_s;
  if (!doc.contains("filter")) return cfg;
  const json &f = doc.at("filter");
  if (!f.is_object()) throw ConfigError("filter must be an object");
  require_known_keys(f,
                     {"n_particles", "p_de", "mode", "p_survive", "p_birth", "birth_u_min",
                      "birth_u_max", "u_walk_std", "init_velocity_std", "sigma_acc", "sigma_reg", "ess_floor"},
                     "filter.");
  SpaConfig &s = cfg.spa;
  if (f.contains("n_particles")) {
    if (!f.at("n_particles").is_number_integer())
      throw ConfigError("filter.n_particles must be an integer");
    s.n_particles = f.at("n_particles").get<int>();
  }
  if (f.contains("mode")) {
    if (!f.at("mode").is_string()) throw ConfigError("filter.mode must be a string");
    s.mode = parse_mode(f.at("mode").get<std::string>());
  }
  s.p_de = number_or(f, "p_de", s.p_de);
  s.p_survive = number_or(f, "p_survive", s.p_survive);
  s.p_birth = number_or(f, "p_birth", s.p_birth);
  s.birth_u_min = number_or(f, "birth_u_min", s.birth_u_min);
  s.birth_u_max = number_or(f, "birth_u_max", s.birth_u_max);
  s.u_walk_std = number_or(f, "u_walk_std", s.u_walk_std);
  s.init_velocity_std = number_or(f, "init_velocity_std", s.init_velocity_std);
  s.ess_floor = number_or(f, "ess_floor", s.ess_floor);
  cfg.motion.sigma_acc = number_or(f, "sigma_acc", cfg.motion.sigma_acc);
  cfg.motion.sigma_reg = number_or(f, "sigma_reg", cfg.motion.sigma_reg);
  if (!(cfg.motion.sigma_acc >= 0)) throw ConfigError("filter.sigma_acc must be non-negative");
  if (!(cfg.motion.sigma_reg >= 0)) throw ConfigError("filter.sigma_reg must be non-negative");
  s.validate();
  return cfg;
}

json filter_config_to_json(const FilterConfig &cfg) {
  const SpaConfig &s = cfg.spa;
  return {{"n_particles", s.n_particles},
          {"p_de", s.p_de},
          {"mode", to_string(s.mode)},
          {"p_survive", s.p_survive},
          {"p_birth", s.p_birth},
          {"birth_u_min", s.birth_u_min},
          {"birth_u_max", s.birth_u_max},
          {"u_walk_std", s.u_walk_std},
          {"init_velocity_std", s.init_velocity_std},
          {"ess_floor", s.ess_floor},
          {"sigma_acc", cfg.motion.sigma_acc},
          {"sigma_reg", cfg.motion.sigma_reg}};
}

LikelihoodModel::LikelihoodModel(NoiseModel noise_in, ClutterParams clutter_in)
    : noise(std::move(noise_in)),
      clutter(clutter_in),
      table(&DetectionTable::get(clutter_in.u_th)) {}

LikelihoodModel LikelihoodModel::from(const Scenario &scn) {
  LikelihoodModel m(noise_model(scn), scn.measurement.clutter);
  m.support = scn.room;
  return m;
}

double log_pda_likelihood(const AgentState &particle, double u, const MeasurementSet &meas,
                          const AnchorGeometry &anchor, const LikelihoodModel &model) {
  if (u < 0.0) throw std::invalid_argument("amplitude must be non-negative");
  const std::vector<MeasTerm> terms = prepare_terms(meas, model);
  std::vector<double> scratch;
  return evaluate_log_lambda(particle.p, u, amplitude_terms(u, model), terms, anchor, scratch);
}

double pda_likelihood(const AgentState &particle, double u, const MeasurementSet &meas,
                      const AnchorGeometry &anchor, const LikelihoodModel &model) {
  return std::exp(log_pda_likelihood(particle, u, meas, anchor, model));
}

ParticleCloud init_agent_cloud(const Room &room, const SpaConfig &cfg, CounterRng &rng) {
  ParticleCloud cloud;
  const auto n = static_cast<std::size_t>(cfg.n_particles);
  cloud.states.resize(n);
  for (AgentState &s : cloud.states) {
    s.p = {rng.uniform(0.0, room.width), rng.uniform(0.0, room.height)};
    s.v = {rng.normal(0.0, cfg.init_velocity_std), rng.normal(0.0, cfg.init_velocity_std)};
  }
  cloud.log_weights.assign(n, -std::log(static_cast<double>(n)));
  cloud.role = MessageRole::kBelief;
  return cloud;
}

AnchorBelief init_anchor(const AnchorGeometry &anchor, const SpaConfig &cfg, CounterRng &rng) {
  AnchorBelief b;
  const auto n = static_cast<std::size_t>(cfg.n_particles);
  b.u.resize(n);
  for (double &u : b.u) u = rng.uniform(cfg.birth_u_min, cfg.birth_u_max);
  b.log_weights.assign(n, -std::log(static_cast<double>(n)));
  b.r_prob = 0.5;
  b.anchor_id = anchor.anchor_id;
  b.anchor_pos = anchor.position;
  return b;
}

ParticleCloud predict_agent(const ParticleCloud &prev_belief, const MotionModel &mm,
                            CounterRng &rng) {
  ParticleCloud out = prev_belief;
  const double dt = mm.dt;
  for (AgentState &s : out.states) {
    const double wx = mm.sigma_acc > 0 ? rng.normal(0.0, mm.sigma_acc) : 0.0;
    const double wy = mm.sigma_acc > 0 ? rng.normal(0.0, mm.sigma_acc) : 0.0;
    s.p.x += s.v.x * dt + 0.5 * wx * dt * dt;
    s.p.y += s.v.y * dt + 0.5 * wy * dt * dt;
    s.v.x += wx * dt;
    s.v.y += wy * dt;
  }
  out.time_index = prev_belief.time_index + 1;
  out.role = MessageRole::kAlpha;
  return out;
}

AnchorBelief predict_anchor(const AnchorBelief &prev, const SpaConfig &cfg, CounterRng &rng) {
  AnchorBelief out = prev;
  const double r = prev.r_prob;
  const double r_pred = cfg.p_survive * r + cfg.p_birth * (1.0 - r);
  out.r_prob = std::clamp(r_pred, 0.0, 1.0);
  // Share of the predicted existence mass that is newborn.
  const double birth_share = r_pred > 0.0 ? cfg.p_birth * (1.0 - r) / r_pred : 1.0;
  for (double &u : out.u) {
    if (birth_share > 0.0 && rng.uniform() < birth_share) {
      u = rng.uniform(cfg.birth_u_min, cfg.birth_u_max);
    } else if (cfg.u_walk_std > 0.0) {
      u = std::max(0.0, u + rng.normal(0.0, cfg.u_walk_std));
    }
  }
  return out;
}

ParticleCloud inter_panel_predict(const ParticleCloud &msg, const MotionModel &mm,
                                  CounterRng &rng, int expected_time) {
  if (msg.time_index != expected_time)
    throw ProtocolError("inter-panel message for time " + std::to_string(msg.time_index) +
                        ", expected " + std::to_string(expected_time));
  ParticleCloud out = msg;
  if (mm.sigma_reg > 0.0) {
    for (AgentState &s : out.states) {
      s.p.x += rng.normal(0.0, mm.sigma_reg);
      s.p.y += rng.normal(0.0, mm.sigma_reg);
    }
  }
  out.role = MessageRole::kAlpha;
  return out;
}

UpdateResult measurement_update(const ParticleCloud &alpha_x, const AnchorBelief &anchor,
                                const AnchorGeometry &geometry, const MeasurementSet &meas,
                                const LikelihoodModel &model) {
  const std::size_t n = alpha_x.size();
  if (anchor.size() != n)
    throw std::invalid_argument("agent and amplitude particle counts differ");
  const std::vector<MeasTerm> terms = prepare_terms(meas, model);
  const double r = anchor.r_prob;
  const double log_r = std::log(r);
  const double log_not_r = std::log1p(-r);
  const double log_n = std::log(static_cast<double>(n));

  UpdateResult res;
  res.log_lambda.resize(n);
  res.log_kappa.resize(n);
  std::vector<double> &log_xi = res.log_xi;
  log_xi.resize(n);
  std::vector<double> scratch;

  for (std::size_t i = 0; i < n; ++i) {
    const double u = anchor.u[i];
    const double ll =
        evaluate_log_lambda(alpha_x.states[i].p, u, amplitude_terms(u, model), terms, geometry, scratch);
    res.log_lambda[i] = ll;
    if (model.support && !model.support->contains(alpha_x.states[i].p)) {
      log_xi[i] = res.log_kappa[i] = -std::numeric_limits<double>::infinity();
      continue;
    }
    if (r <= 0.0) log_xi[i] = 0.0;
    else if (r >= 1.0) log_xi[i] = ll;
    else log_xi[i] = log_add_exp(log_r + ll, log_not_r);
    res.log_kappa[i] = log_n + alpha_x.log_weights[i] + ll;
  }
  res.likelihood_evals = n * (terms.size() + 1);

  res.gamma = alpha_x;
  res.gamma.role = MessageRole::kGamma;
  res.gamma.origin_panel = geometry.panel_id;
  const auto [lo, hi] = std::minmax_element(log_xi.begin(), log_xi.end());
  if (n > 0 && *hi != *lo) {
    for (std::size_t i = 0; i < n; ++i) res.gamma.log_weights[i] += log_xi[i];
    res.gamma.normalize();
  }

  std::vector<double> weighted(n);
  for (std::size_t i = 0; i < n; ++i) weighted[i] = anchor.log_weights[i] + res.log_kappa[i];
  res.log_mean_kappa = log_sum_exp(weighted);
  return res;
}

AnchorBelief existence_update(const AnchorBelief &anchor, const UpdateResult &update) {
  AnchorBelief out = anchor;
  const double r = anchor.r_prob;
  const double lmk = update.log_mean_kappa;
  if (r <= 0.0) {
    out.r_prob = 0.0;
  } else if (r >= 1.0) {
    out.r_prob = 1.0;
  } else if (lmk == -std::numeric_limits<double>::infinity()) {
    spdlog::debug("anchor {}: factor message vanished, existence collapses", anchor.anchor_id);
    out.r_prob = 0.0;
  } else {
    // r kappa / (r kappa + (1 - r)) evaluated as a logistic of the log-odds.
    const double log_odds = std::log(r) + lmk - std::log1p(-r);
    out.r_prob = std::clamp(1.0 / (1.0 + std::exp(-log_odds)), 0.0, 1.0);
  }

  std::vector<double> lw(anchor.size());
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = anchor.log_weights[i] + update.log_kappa[i];
  try {
    normalize_log_weights(lw);
    out.log_weights = std::move(lw);
  } catch (const NumericalDegeneracy &) {
    spdlog::debug("anchor {}: amplitude weights degenerate, keeping prior", anchor.anchor_id);
  }
  return out;
}

std::vector<std::size_t> systematic_resample(const std::vector<double> &weights, CounterRng &rng) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> idx(n);
  if (n == 0) return idx;
  const double step = 1.0 / static_cast<double>(n);
  double target = rng.uniform() * step;
  double cumulative = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (target > cumulative && j + 1 < n) cumulative += weights[++j];
    idx[i] = j;
    target += step;
  }
  return idx;
}

ParticleCloud resample_regularize(const ParticleCloud &cloud, CounterRng &rng) {
  const std::size_t n = cloud.size();
  const std::vector<double> w = linear_weights(cloud.log_weights);

  std::vector<double> px(n), py(n), vx(n), vy(n);
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = cloud.states[i].p.x;
    py[i] = cloud.states[i].p.y;
    vx[i] = cloud.states[i].v.x;
    vy[i] = cloud.states[i].v.y;
  }
  double mean[4];
  double sd[4];
  weighted_moments(px, w, mean[0], sd[0]);
  weighted_moments(py, w, mean[1], sd[1]);
  weighted_moments(vx, w, mean[2], sd[2]);
  weighted_moments(vy, w, mean[3], sd[3]);
  const double h = std::pow(static_cast<double>(n), -1.0 / 6.0);
  // Kernel shrinkage: mean and variance survive the jitter, so repeated
  // resampling along the chain does not inflate the spread.
  const double a = std::sqrt(1.0 - h * h);
  auto jitter = [&](double x, int k) {
    return sd[k] > 0 ? a * x + (1.0 - a) * mean[k] + rng.normal(0.0, h * sd[k]) : x;
  };

  const std::vector<std::size_t> idx = systematic_resample(w, rng);
  ParticleCloud out;
  out.states.resize(n);
  out.time_index = cloud.time_index;
  out.origin_panel = cloud.origin_panel;
  out.role = cloud.role;
  for (std::size_t i = 0; i < n; ++i) {
    AgentState s = cloud.states[idx[i]];
    s.p.x = jitter(s.p.x, 0);
    s.p.y = jitter(s.p.y, 1);
    s.v.x = jitter(s.v.x, 2);
    s.v.y = jitter(s.v.y, 3);
    out.states[i] = s;
  }
  out.log_weights.assign(n, -std::log(static_cast<double>(n)));
  return out;
}

namespace {

// ESS of the cloud weights times exp(beta * log_xi), without normalizing.
double tempered_ess(const std::vector<double> &log_w, const std::vector<double> &log_xi,
                    double beta) {
  double mx = kNegInf;
  for (std::size_t i = 0; i < log_w.size(); ++i) mx = std::max(mx, log_w[i] + beta * log_xi[i]);
  if (!std::isfinite(mx)) return 0.0;
  double s = 0.0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    const double w = std::exp(log_w[i] + beta * log_xi[i] - mx);
    s += w;
    s2 += w * w;
  }
  return s * s / s2;
}

}  // namespace

ParticleCloud progressive_update(const ParticleCloud &alpha_x, const UpdateResult &update,
                                 const AnchorBelief &anchor, const AnchorGeometry &geometry,
                                 const MeasurementSet &meas, const LikelihoodModel &model,
                                 double ess_floor, CounterRng &rng) {
  constexpr int kMaxStages = 12;
  const double target = ess_floor * static_cast<double>(alpha_x.size());
  if (ess_floor <= 0.0 || tempered_ess(alpha_x.log_weights, update.log_xi, 1.0) >= target)
    return resample_regularize(update.gamma, rng);

  ParticleCloud cur = alpha_x;
  std::vector<double> log_xi = update.log_xi;
  double remaining = 1.0;
  for (int stage = 0; stage < kMaxStages; ++stage) {
    double beta = remaining;
    if (stage + 1 < kMaxStages && tempered_ess(cur.log_weights, log_xi, remaining) < target) {
      // ESS falls with beta; bisect for the largest step that keeps the floor.
      double lo = 0.0;
      double hi = remaining;
      for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        (tempered_ess(cur.log_weights, log_xi, mid) >= target ? lo : hi) = mid;
      }
      beta = std::max(lo, 1e-6 * remaining);
    }
    for (std::size_t i = 0; i < cur.size(); ++i) cur.log_weights[i] += beta * log_xi[i];
    cur.normalize();
    cur = resample_regularize(cur, rng);
    remaining -= beta;
    if (remaining <= 0.0) break;
    log_xi = measurement_update(cur, anchor, geometry, meas, model).log_xi;
  }
  cur.role = update.gamma.role;
  cur.origin_panel = update.gamma.origin_panel;
  return cur;
}

AnchorBelief resample_anchor(const AnchorBelief &anchor, CounterRng &rng) {
  const std::size_t n = anchor.size();
  const std::vector<double> w = linear_weights(anchor.log_weights);
  double mean = 0.0;
  double sd = 0.0;
  weighted_moments(anchor.u, w, mean, sd);
  sd *= std::pow(static_cast<double>(n), -1.0 / 6.0);

  const std::vector<std::size_t> idx = systematic_resample(w, rng);
  AnchorBelief out = anchor;
  for (std::size_t i = 0; i < n; ++i) {
    double u = anchor.u[idx[i]];
    if (sd > 0) u = std::max(0.0, u + rng.normal(0.0, sd));
    out.u[i] = u;
  }
  out.log_weights.assign(n, -std::log(static_cast<double>(n)));
  return out;
}

Estimate mmse_estimates(const ParticleCloud &belief, const std::vector<AnchorBelief> &anchors,
                        double p_de) {
  Estimate est;
  const std::vector<double> w = belief.weights();
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < belief.size(); ++i) {
    const double wi = w[i] / total;
    est.x.p += belief.states[i].p * wi;
    est.x.v += belief.states[i].v * wi;
  }
  for (const AnchorBelief &a : anchors) {
    if (!(a.r_prob > p_de)) continue;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double wi = std::exp(a.log_weights[i]);
      num += wi * a.u[i];
      den += wi;
    }
    est.detected.emplace_back(a.anchor_id, den > 0 ? num / den : 0.0);
  }
  return est;
}

}  // namespace dmloc

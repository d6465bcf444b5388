#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "dmloc/spa.hpp"

using namespace dmloc;
using doctest::Approx;

namespace {
constexpr double kPi = std::numbers::pi;

CounterRng test_rng(std::uint32_t slot = 0) {
  return CounterRng(StreamKey{11, 0, 0, 0, Purpose::kTest, slot});
}

ParticleCloud gaussian_cloud(std::size_t n, Point2 mu, double s, CounterRng &rng) {
  ParticleCloud c;
  c.states.resize(n);
  for (AgentState &st : c.states) {
    st.p = {rng.normal(mu.x, s), rng.normal(mu.y, s)};
    st.v = {rng.normal(0.5, 0.2), rng.normal(-0.3, 0.2)};
  }
  c.log_weights.assign(n, -std::log(static_cast<double>(n)));
  return c;
}

AnchorBelief flat_anchor(std::size_t n, double u, double r) {
  AnchorBelief a;
  a.u.assign(n, u);
  a.log_weights.assign(n, -std::log(static_cast<double>(n)));
  a.r_prob = r;
  a.anchor_id = 1;
  return a;
}

Scenario small_scene() { return parse_scenario({{"n_panels", 4}}); }

AnchorGeometry pa_of(const Scenario &scn, int panel) {
  return panel_anchors(scn, scn.panels.at(panel), Mode::kLoS).front();
}

MeasurementSet exact_measurement(const AnchorGeometry &g, Point2 agent, double z) {
  MeasurementSet m;
  const auto [d, phi] = g.expected(agent);
  m.items.push_back({d, phi, z});
  m.kinds.push_back(PathKind::kLoS);
  return m;
}

std::pair<double, double> weighted_mean(const ParticleCloud &c) {
  const std::vector<double> w = c.weights();
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  double x = 0, y = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    x += w[i] * c.states[i].p.x / s;
    y += w[i] * c.states[i].p.y / s;
  }
  return {x, y};
}
}  // namespace

TEST_SUITE("spa") {
  TEST_CASE("pda_likelihood matches the linear-domain oracle") {
    const Scenario scn = small_scene();
    const LikelihoodModel model = LikelihoodModel::from(scn);
    const AnchorGeometry g = pa_of(scn, 0);
    const MeasurementSet meas = synthesize_panel(scn, scn.panels[0], 30, 4, 0);
    CounterRng rng = test_rng();
    for (int k = 0; k < 200; ++k) {
      const Point2 p{rng.uniform(1, 29), rng.uniform(1, 29)};
      const double u = rng.uniform(0.0, 15.0);
      const double ref = oracle::pda_likelihood(p, u, meas, g, model.noise, model.clutter);
      const double got = pda_likelihood({p, {0, 0}}, u, meas, g, model);
      CAPTURE(k);
      CHECK(got == Approx(ref).epsilon(1e-4));
    }
  }

  TEST_CASE("pda_likelihood with no measurements is the miss probability") {
    const Scenario scn = small_scene();
    const LikelihoodModel model = LikelihoodModel::from(scn);
    const AnchorGeometry g = pa_of(scn, 1);
    for (double u : {0.0, 1.0, 3.0, 9.0})
      CHECK(pda_likelihood({{10, 10}, {0, 0}}, u, MeasurementSet{}, g, model) ==
            Approx(1.0 - oracle::detection_prob(u, model.clutter.u_th)).epsilon(1e-4));
  }

  TEST_CASE("a matching measurement raises the likelihood ratio above one") {
    const Scenario scn = small_scene();
    const LikelihoodModel model = LikelihoodModel::from(scn);
    const AnchorGeometry g = pa_of(scn, 0);
    const Point2 agent{12, 18};
    const double u = path_amplitude(distance(agent, g.panel_pos), false, scn.radio, 0.0);
    const MeasurementSet m = exact_measurement(g, agent, u);
    CHECK(pda_likelihood({agent, {0, 0}}, u, m, g, model) > 1.0);
  }

  TEST_CASE("a measurement far away in range leaves only the miss term") {
    const Scenario scn = small_scene();
    const LikelihoodModel model = LikelihoodModel::from(scn);
    const AnchorGeometry g = pa_of(scn, 0);
    const Point2 agent{12, 18};
    const double u = 8.0;
    MeasurementSet m = exact_measurement(g, agent, u);
    m.items[0].d += 40.0 * range_std(u, scn.radio.bandwidth_hz);
    const double pd = oracle::detection_prob(u, model.clutter.u_th);
    CHECK(std::abs(pda_likelihood({agent, {0, 0}}, u, m, g, model) - (1.0 - pd)) < 1e-12);
  }

  TEST_CASE("measurement update costs N(M+1) terms") {
    const Scenario scn = small_scene();
    const LikelihoodModel model = LikelihoodModel::from(scn);
    CounterRng rng = test_rng();
    const ParticleCloud alpha = gaussian_cloud(512, {15, 15}, 3, rng);
    for (int n : {0, 5, 17}) {
      const MeasurementSet meas = synthesize_panel(scn, scn.panels[2], n, 1, 0);
      const UpdateResult r =
          measurement_update(alpha, flat_anchor(512, 5.0, 0.5), pa_of(scn, 2), meas, model);
      CHECK(r.likelihood_evals == 512 * (meas.size() + 1));
    }
  }

  TEST_CASE("measurement update rejects mismatched particle counts") {
    const Scenario scn = small_scene();
    CounterRng rng = test_rng();
    const ParticleCloud alpha = gaussian_cloud(64, {15, 15}, 3, rng);
    CHECK_THROWS_AS(measurement_update(alpha, flat_anchor(65, 5.0, 0.5), pa_of(scn, 0),
                                       MeasurementSet{}, LikelihoodModel::from(scn)),
                    std::invalid_argument);
  }

  TEST_CASE("gamma equals alpha when the update carries no position information") {
    const Scenario scn = small_scene();
    const LikelihoodModel model = LikelihoodModel::from(scn);
    CounterRng rng = test_rng();
    const ParticleCloud alpha = gaussian_cloud(256, {15, 15}, 2, rng);
    // No measurements and equal amplitudes: xi is constant across particles.
    const UpdateResult empty =
        measurement_update(alpha, flat_anchor(256, 40.0, 0.7), pa_of(scn, 0), MeasurementSet{}, model);
    for (std::size_t i = 0; i < alpha.size(); ++i)
      CHECK(empty.gamma.log_weights[i] == Approx(alpha.log_weights[i]).epsilon(1e-12));

    // r = 0: the anchor is certainly absent.
    const MeasurementSet meas = synthesize_panel(scn, scn.panels[0], 3, 1, 0);
    const UpdateResult absent =
        measurement_update(alpha, flat_anchor(256, 5.0, 0.0), pa_of(scn, 0), meas, model);
    for (std::size_t i = 0; i < alpha.size(); ++i)
      CHECK(absent.gamma.log_weights[i] == alpha.log_weights[i]);
  }

  TEST_CASE("gamma weights are normalized and existence stays a probability") {
    const Scenario scn = small_scene();
    const LikelihoodModel model = LikelihoodModel::from(scn);
    for (std::uint32_t k = 0; k < 30; ++k) {
      CounterRng rng = test_rng(k);
      const ParticleCloud alpha = gaussian_cloud(300, {rng.uniform(3, 27), rng.uniform(3, 27)}, 1.5, rng);
      AnchorBelief a = flat_anchor(300, 0, rng.uniform());
      for (double &u : a.u) u = rng.uniform(0, 20);
      const MeasurementSet meas = synthesize_panel(scn, scn.panels[k % 4], static_cast<int>(k), 2, 0);
      const UpdateResult r = measurement_update(alpha, a, pa_of(scn, k % 4), meas, model);
      CHECK(r.gamma.weight_sum() == Approx(1.0).epsilon(1e-9));
      const AnchorBelief post = existence_update(a, r);
      CHECK(post.r_prob >= 0.0);
      CHECK(post.r_prob <= 1.0);
      CHECK(post.weight_sum() == Approx(1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("single noiseless measurement pulls the MMSE toward truth") {
    const Scenario scn = small_scene();
    const LikelihoodModel model = LikelihoodModel::from(scn);
    const AnchorGeometry g = pa_of(scn, 0);
    const Point2 truth{14, 20};
    const Point2 prior_mean{14.8, 19.3};
    CounterRng rng = test_rng(5);
    const ParticleCloud alpha = gaussian_cloud(8192, prior_mean, 1.0, rng);
    const double u0 = path_amplitude(distance(truth, g.panel_pos), false, scn.radio, 0.0);
    const MeasurementSet m = exact_measurement(g, truth, u0);
    const UpdateResult r = measurement_update(alpha, flat_anchor(8192, u0, 0.9), g, m, model);
    const auto [x, y] = weighted_mean(r.gamma);
    const auto [x0, y0] = weighted_mean(alpha);
    CHECK(distance({x, y}, truth) < distance({x0, y0}, truth));
    const auto grid =
        oracle::grid_posterior(prior_mean, 1.0, u0, 0.9, m, g, model.noise, model.clutter, 200, 5.0);
    CHECK(distance({x, y}, {grid.mean_x, grid.mean_y}) < 0.1);
  }

  TEST_CASE("existence update follows the log-odds recursion") {
    AnchorBelief a = flat_anchor(4, 1.0, 0.3);
    UpdateResult neutral;
    neutral.log_kappa.assign(4, 0.0);
    neutral.log_mean_kappa = 0.0;
    CHECK(existence_update(a, neutral).r_prob == Approx(0.3));

    UpdateResult strong = neutral;
    strong.log_mean_kappa = 200.0;
    CHECK(existence_update(a, strong).r_prob == Approx(1.0));

    UpdateResult weak = neutral;
    weak.log_mean_kappa = std::log(0.2);
    CHECK(existence_update(a, weak).r_prob == Approx(0.3 * 0.2 / (0.3 * 0.2 + 0.7)));
  }

  TEST_CASE("blocked LoS drives existence below the detection threshold in two steps") {
    const Scenario scn = parse_scenario({{"n_panels", 4}, {"measurement", {{"mu_fa", 2.0}}}});
    const LikelihoodModel model = LikelihoodModel::from(scn);
    SpaConfig cfg;
    cfg.u_walk_std = 0.0;
    const double u = 6.0;
    CounterRng rng = test_rng(2);
    const ParticleCloud alpha = gaussian_cloud(256, {15, 15}, 1.0, rng);
    AnchorBelief a = flat_anchor(256, u, 0.9);
    double r_hand = 0.9;
    const double pd = oracle::detection_prob(u, model.clutter.u_th);
    for (int step = 0; step < 2; ++step) {
      CounterRng prng = test_rng(10 + step);
      a = predict_anchor(a, cfg, prng);
      // Restore the amplitudes: birth draws would blur the hand recursion.
      std::fill(a.u.begin(), a.u.end(), u);
      r_hand = cfg.p_survive * r_hand + cfg.p_birth * (1 - r_hand);
      CHECK(a.r_prob == Approx(r_hand).epsilon(1e-12));
      a = existence_update(a, measurement_update(alpha, a, pa_of(scn, 0), MeasurementSet{}, model));
      r_hand = r_hand * (1 - pd) / (r_hand * (1 - pd) + 1 - r_hand);
      CHECK(a.r_prob == Approx(r_hand).epsilon(1e-4));
    }
    CHECK(a.r_prob < cfg.p_de);
  }

  TEST_CASE("predict_anchor existence chain") {
    SpaConfig cfg;
    CounterRng rng = test_rng();
    cfg.p_survive = 1.0;
    cfg.p_birth = 0.0;
    CHECK(predict_anchor(flat_anchor(16, 3.0, 0.37), cfg, rng).r_prob == 0.37);

    cfg.p_survive = 0.95;
    cfg.p_birth = 0.01;
    CHECK(predict_anchor(flat_anchor(16, 3.0, 0.0), cfg, rng).r_prob == Approx(0.01));

    const double r_star = cfg.p_birth / (1 - cfg.p_survive + cfg.p_birth);
    for (double r0 : {0.0, 0.5, 1.0}) {
      AnchorBelief a = flat_anchor(8, 3.0, r0);
      for (int k = 0; k < 1000; ++k) a = predict_anchor(a, cfg, rng);
      CHECK(std::abs(a.r_prob - r_star) < 1e-6);
    }
  }

  TEST_CASE("predict_anchor keeps amplitudes non-negative") {
    SpaConfig cfg;
    cfg.u_walk_std = 2.0;
    CounterRng rng = test_rng();
    AnchorBelief a = flat_anchor(2000, 0.1, 0.8);
    for (int k = 0; k < 20; ++k) a = predict_anchor(a, cfg, rng);
    for (double u : a.u) CHECK(u >= 0.0);
  }

  TEST_CASE("constant-velocity prediction") {
    MotionModel mm;
    mm.sigma_acc = 0.0;
    mm.dt = 0.25;
    ParticleCloud c;
    c.states = {{{1, 2}, {3, -4}}};
    c.log_weights = {0.0};
    CounterRng rng = test_rng();
    const ParticleCloud out = predict_agent(c, mm, rng);
    CHECK(out.states[0].p.x == Approx(1.75));
    CHECK(out.states[0].p.y == Approx(1.0));
    CHECK(out.states[0].v.x == 3.0);
    CHECK(out.time_index == 1);
  }

  TEST_CASE("prediction preserves weights and the mean velocity") {
    MotionModel mm;
    CounterRng rng = test_rng(3);
    ParticleCloud c = gaussian_cloud(20000, {15, 15}, 1, rng);
    for (std::size_t i = 0; i < c.size(); ++i) c.log_weights[i] = -0.001 * static_cast<double>(i % 7);
    c.normalize();
    const ParticleCloud out = predict_agent(c, mm, rng);
    CHECK(out.log_weights == c.log_weights);
    auto mean_vx = [](const ParticleCloud &cl) {
      const auto w = cl.weights();
      double s = 0;
      for (std::size_t i = 0; i < cl.size(); ++i) s += w[i] * cl.states[i].v.x;
      return s;
    };
    const double sd = mm.sigma_acc * mm.dt;
    CHECK(std::abs(mean_vx(out) - mean_vx(c)) < 3 * sd / std::sqrt(20000.0) * 1.01);
  }

  TEST_CASE("inter-panel prediction") {
    MotionModel mm;
    CounterRng rng = test_rng(4);
    ParticleCloud c = gaussian_cloud(40000, {15, 15}, 0.5, rng);
    c.time_index = 7;

    MotionModel none = mm;
    none.sigma_reg = 0.0;
    const ParticleCloud same = inter_panel_predict(c, none, rng, 7);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(same.states[i].p == c.states[i].p);

    mm.sigma_reg = 0.3;
    const ParticleCloud out = inter_panel_predict(c, mm, rng, 7);
    CHECK(out.log_weights == c.log_weights);
    auto var_x = [](const ParticleCloud &cl) {
      double m = 0, v = 0;
      for (const AgentState &s : cl.states) m += s.p.x / cl.size();
      for (const AgentState &s : cl.states) v += (s.p.x - m) * (s.p.x - m) / cl.size();
      return v;
    };
    const double grown = var_x(out) - var_x(c);
    // Sampling error of a variance estimate from 40000 draws is about 1 %.
    CHECK(grown == Approx(0.09).epsilon(0.15));
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(out.states[i].v == c.states[i].v);

    CHECK_THROWS_AS(inter_panel_predict(c, mm, rng, 8), ProtocolError);
  }

  TEST_CASE("mmse estimates") {
    ParticleCloud c;
    c.states = {{{0, 0}, {0, 0}}, {{2, 2}, {1, 1}}};
    c.log_weights = {std::log(0.5), std::log(0.5)};
    const Estimate e = mmse_estimates(c, {}, 0.5);
    CHECK(e.x.p.x == Approx(1.0));
    CHECK(e.x.p.y == Approx(1.0));

    c.log_weights = {0.0, -std::numeric_limits<double>::infinity()};
    CHECK(mmse_estimates(c, {}, 0.5).x.p == Point2{0, 0});

    AnchorBelief hidden = flat_anchor(4, 2.0, 0.4);
    AnchorBelief shown = flat_anchor(4, 3.0, 0.6);
    shown.anchor_id = 2;
    const Estimate d = mmse_estimates(c, {hidden, shown}, 0.5);
    REQUIRE(d.detected.size() == 1);
    CHECK(d.detected[0].first == 2);
    CHECK(d.detected[0].second == Approx(3.0));
  }

  TEST_CASE("systematic resampling") {
    CounterRng rng = test_rng();
    const std::vector<double> uniform(100, 0.01);
    const auto idx = systematic_resample(uniform, rng);
    std::vector<int> count(100, 0);
    for (std::size_t i : idx) ++count[i];
    for (int c : count) CHECK(c <= 2);

    std::vector<double> one_hot(50, 0.0);
    one_hot[0] = 1.0;
    for (std::size_t i : systematic_resample(one_hot, rng)) CHECK(i == 0);

    // Offspring count of particle i stays within one of N w_i.
    std::vector<double> w(64);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 + static_cast<double>(i % 5);
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (double &x : w) x /= s;
    std::vector<int> off(64, 0);
    for (std::size_t i : systematic_resample(w, rng)) ++off[i];
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(off[i] - 64 * w[i]) < 1.0 + 1e-9);
  }

  TEST_CASE("resample_regularize") {
    CounterRng rng = test_rng(6);
    ParticleCloud c = gaussian_cloud(4096, {10, 20}, 1.0, rng);
    for (std::size_t i = 0; i < c.size(); ++i) c.log_weights[i] = -0.5 * c.states[i].p.x;
    c.normalize();
    const auto [mx, my] = weighted_mean(c);
    const ParticleCloud out = resample_regularize(c, rng);
    REQUIRE(out.size() == c.size());
    for (double lw : out.log_weights) CHECK(lw == Approx(-std::log(4096.0)));
    double ess_den = 0;
    for (double w : out.weights()) ess_den += w * w;
    CHECK(1.0 / ess_den == Approx(4096.0));
    const auto [ox, oy] = weighted_mean(out);
    CHECK(std::abs(ox - mx) < 0.05);
    CHECK(std::abs(oy - my) < 0.05);

    ParticleCloud one_hot = c;
    std::fill(one_hot.log_weights.begin(), one_hot.log_weights.end(),
              -std::numeric_limits<double>::infinity());
    one_hot.log_weights[3] = 0.0;
    const ParticleCloud copies = resample_regularize(one_hot, rng);
    for (const AgentState &s : copies.states) CHECK(s.p == one_hot.states[3].p);

    ParticleCloud dead = c;
    std::fill(dead.log_weights.begin(), dead.log_weights.end(),
              -std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(resample_regularize(dead, rng), NumericalDegeneracy);
  }

  TEST_CASE("progressive update is plain resampling when the ESS is healthy") {
    const Scenario scn = small_scene();
    const LikelihoodModel model = LikelihoodModel::from(scn);
    const AnchorGeometry g = pa_of(scn, 0);
    CounterRng rng = test_rng(20);
    const ParticleCloud alpha = gaussian_cloud(1024, {15, 15}, 2.0, rng);
    const AnchorBelief a = flat_anchor(1024, 6.0, 0.8);

    const UpdateResult flat = measurement_update(alpha, a, g, MeasurementSet{}, model);
    CounterRng r1 = test_rng(21), r2 = test_rng(21);
    const ParticleCloud x = progressive_update(alpha, flat, a, g, MeasurementSet{}, model, 0.1, r1);
    const ParticleCloud y = resample_regularize(flat.gamma, r2);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.states[i].p == y.states[i].p);

    const MeasurementSet m = exact_measurement(g, {14, 16}, 6.0);
    const UpdateResult sharp = measurement_update(alpha, a, g, m, model);
    CounterRng r3 = test_rng(22), r4 = test_rng(22);
    const ParticleCloud u = progressive_update(alpha, sharp, a, g, m, model, 0.0, r3);
    const ParticleCloud v = resample_regularize(sharp.gamma, r4);
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(u.states[i].p == v.states[i].p);
  }

  TEST_CASE("progressive update tracks the grid posterior where one pass degenerates") {
    const Scenario scn = parse_scenario({{"n_panels", 4}, {"radio", {{"bandwidth_hz", 40e6}}}});
    const LikelihoodModel model(noise_model(scn), scn.measurement.clutter);
    const AnchorGeometry g = pa_of(scn, 0);
    const Point2 truth{13, 17};
    const Point2 mu{15, 15};
    const double s = 3.0;
    const std::size_t n = 4096;
    CounterRng rng = test_rng(23);
    const ParticleCloud alpha = gaussian_cloud(n, mu, s, rng);
    const double u0 = path_amplitude(distance(truth, g.panel_pos), false, scn.radio, 0.0);
    const AnchorBelief a = flat_anchor(n, u0, 0.9);
    const MeasurementSet m = exact_measurement(g, truth, u0);
    const UpdateResult upd = measurement_update(alpha, a, g, m, model);

    double s1 = 0, s2 = 0;
    for (double w : upd.gamma.weights()) {
      s1 += w;
      s2 += w * w;
    }
    CHECK(s1 * s1 / s2 < 0.1 * n);

    const ParticleCloud post = progressive_update(alpha, upd, a, g, m, model, 0.1, rng);
    REQUIRE(post.size() == n);
    for (double lw : post.log_weights) CHECK(lw == Approx(-std::log(static_cast<double>(n))));
    const auto grid = oracle::grid_posterior(mu, s, u0, 0.9, m, g, model.noise, model.clutter, 400, 10.0);
    const auto [px, py] = weighted_mean(post);
    CAPTURE(grid.mean_x);
    CAPTURE(grid.mean_y);
    CHECK(distance({px, py}, {grid.mean_x, grid.mean_y}) < 0.15);
  }

  TEST_CASE("virtual anchor observability") {
    const Scenario scn = small_scene();
    const auto anchors = panel_anchors(scn, scn.panels[0], Mode::kMPC);
    REQUIRE(anchors.size() == 4);  // PA plus three outer walls
    CHECK_FALSE(anchors[0].is_virtual());
    for (std::size_t k = 1; k < anchors.size(); ++k) {
      const AnchorGeometry &va = anchors[k];
      CHECK(va.is_virtual());
      CHECK(va.observable({12, 18}));
      // Behind the mirror wall: mirror the test point across it.
      CHECK_FALSE(va.observable(mirror_point({12, 18}, *va.mirror)));
      // Expected distance equals the unfolded bounce length.
      const auto path = single_bounce_path({12, 18}, va.panel_pos, *va.mirror, std::vector<Wall>{*va.mirror});
      REQUIRE(path.has_value());
      CHECK(va.expected({12, 18}).first == Approx(path->d));
    }
    // Agent hugging the mirror wall: bounce not resolvable from LoS.
    const AnchorGeometry &left = anchors[3];
    CHECK(left.mirror->a.x == 0.0);
    CHECK_FALSE(left.observable({0.05, 15}));
    // Reflection point beyond the end of the wall segment.
    AnchorGeometry short_wall;
    short_wall.panel_pos = {3, 1};
    short_wall.mirror = Wall{{0, 0}, {4, 0}, true};
    short_wall.position = mirror_point(short_wall.panel_pos, *short_wall.mirror);
    CHECK(short_wall.observable({1, 1}));
    CHECK_FALSE(short_wall.observable({9, 1}));
    CHECK(panel_anchors(scn, scn.panels[0], Mode::kLoS).size() == 1);
  }

  TEST_CASE("filter config parsing") {
    const FilterConfig cfg = parse_filter_config(
        {{"filter", {{"n_particles", 128}, {"mode", "mpc"}, {"sigma_reg", 0.0}}}}, 0.2);
    CHECK(cfg.spa.n_particles == 128);
    CHECK(cfg.spa.mode == Mode::kMPC);
    CHECK(cfg.motion.sigma_reg == 0.0);
    CHECK(cfg.motion.dt == 0.2);
    CHECK_THROWS_AS(parse_filter_config({{"filter", {{"p_de", 1.5}}}}, 0.1), ConfigError);
    CHECK_THROWS_AS(parse_filter_config({{"filter", {{"bogus", 1}}}}, 0.1), ConfigError);
    CHECK_THROWS_AS(parse_filter_config({{"filter", {{"mode", "both"}}}}, 0.1), ConfigError);
    const FilterConfig back = parse_filter_config({{"filter", filter_config_to_json(cfg)}}, 0.2);
    CHECK(back.spa.n_particles == 128);
    CHECK(back.spa.mode == Mode::kMPC);
    CHECK(back.spa.ess_floor == cfg.spa.ess_floor);
    CHECK_THROWS_AS(parse_filter_config({{"filter", {{"ess_floor", 1.0}}}}, 0.1), ConfigError);
  }
}

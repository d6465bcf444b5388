#include "dmloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

namespace dmloc {

double RunResult::final_error() const {
  if (steps.empty()) return std::numeric_limits<double>::infinity();
  return steps.back().error();
}

RunResult run_single(const Scenario &scn, const FilterConfig &cfg, std::uint32_t run,
                     std::uint64_t seed, const MonteCarloOptions &opts) {
  const int total = static_cast<int>(scn.trajectory.size());
  const int n_steps = opts.n_steps > 0 ? std::min(opts.n_steps, total) : total;
  RunResult out;
  out.run_id = run;
  try {
    std::unique_ptr<Transport> chain = make_transport(opts.transport, scn, cfg, seed, run);
    ParticleCloud belief = initial_belief(scn, cfg, seed, run);
    for (int n = 0; n < n_steps; ++n) {
      const std::vector<MeasurementSet> meas = synthesize_timestep(scn, n, seed, run);
      TimestepResult res = chain->run_timestep(belief, meas);
      StepRecord rec;
      rec.time_index = res.time_index;
      rec.truth = scn.trajectory[n].p;
      rec.estimate = res.estimate.x;
      rec.detected = res.detected;
      for (std::size_t j = 0; j < res.anchors.size(); ++j) {
        rec.r_prob.push_back(res.anchors[j].empty() ? 0.0 : res.anchors[j].front().r_prob);
        rec.anchors.push_back(res.anchors[j].size());
        rec.n_meas.push_back(meas[j].items.size());
      }
      out.steps.push_back(std::move(rec));
      belief = std::move(res.belief);
    }
  } catch (const std::exception &e) {
    out.error = e.what();
    spdlog::warn("run {} aborted: {}", run, e.what());
  }
  out.diverged = !out.error.empty() || out.final_error() > kDivergenceThreshold_m;
  return out;
}

std::vector<RunResult> run_monte_carlo(const Scenario &scn, const FilterConfig &cfg, int n_runs,
                                       std::uint64_t seed, const MonteCarloOptions &opts) {
  if (n_runs < 1) throw std::invalid_argument("n_runs must be at least 1");
  std::vector<RunResult> results(static_cast<std::size_t>(n_runs));
  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n_runs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < n_runs; r = next++)
      results[r] = run_single(scn, cfg, static_cast<std::uint32_t>(r), seed, opts);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto &t : pool) t.join();
  }
  return results;
}

double sample_quantile(std::vector<double> data, double q) {
  if (data.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(data.begin(), data.end());
  const double h = (static_cast<double>(data.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, data.size() - 1);
  return data[lo] + (h - static_cast<double>(lo)) * (data[hi] - data[lo]);
}

ErrorBand rmse_over_time(const std::vector<RunResult> &results) {
  if (results.empty()) throw std::invalid_argument("rmse_over_time needs at least one run");
  std::size_t len = results.front().steps.size();
  for (const RunResult &r : results) len = std::min(len, r.steps.size());
  ErrorBand band;
  std::vector<double> errs(results.size());
  for (std::size_t n = 0; n < len; ++n) {
    double sq = 0.0;
    for (std::size_t r = 0; r < results.size(); ++r) {
      errs[r] = results[r].steps[n].error();
      sq += errs[r] * errs[r];
    }
    band.rmse.push_back(std::sqrt(sq / static_cast<double>(results.size())));
    band.q10.push_back(sample_quantile(errs, 0.1));
    band.q90.push_back(sample_quantile(errs, 0.9));
  }
  return band;
}

double rmse_scalar(const std::vector<RunResult> &results) {
  if (results.empty()) throw std::invalid_argument("rmse_scalar needs at least one run");
  double sq = 0.0;
  std::size_t count = 0;
  for (const RunResult &r : results)
    for (const StepRecord &s : r.steps) {
      sq += s.error() * s.error();
      ++count;
    }
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(sq / static_cast<double>(count));
}

std::size_t divergence_count(const std::vector<RunResult> &results) {
  return static_cast<std::size_t>(
      std::count_if(results.begin(), results.end(), [](const RunResult &r) { return r.diverged; }));
}

double mean_chain_latency(const std::vector<RunResult> &results, std::size_t n_particles,
                          const LatencyParams &params) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const RunResult &r : results)
    for (const StepRecord &s : r.steps) {
      sum += chain_latency(s.n_meas.size(), s.n_meas, n_particles, params, s.anchors).total_s;
      ++count;
    }
  return count ? sum / static_cast<double>(count) : 0.0;
}

void SweepSpec::validate() const {
  if (panels.empty() || array_elements.empty() || particles.empty() || bandwidths.empty() ||
      modes.empty())
    throw ConfigError("sweep grids must be non-empty");
  if (n_runs < 1) throw ConfigError("runs must be at least 1");
  latency.validate();
}

namespace {

template <typename T>
std::vector<T> grid(const nlohmann::json &g, const char *key, std::vector<T> fallback) {
  if (!g.contains(key)) return fallback;
  const nlohmann::json &v = g.at(key);
  if (!v.is_array()) throw ConfigError(std::string("grid.") + key + " must be an array");
  try {
    return v.get<std::vector<T>>();
  } catch (const nlohmann::json::exception &) {
    throw ConfigError(std::string("grid.") + key + " has entries of the wrong type");
  }
}

}  // namespace

SweepSpec parse_sweep_spec(const nlohmann::json &doc, const std::filesystem::path &base_dir) {
  require_known_keys(doc,
                     {"scenario", "scenario_file", "filter", "grid", "runs", "seed", "n_steps",
                      "latency", "threads"},
                     "");
  SweepSpec spec;
  if (doc.contains("scenario_file")) {
    std::filesystem::path p = doc.at("scenario_file").get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    spec.scenario = read_json_file(p);
  }
  if (doc.contains("scenario")) spec.scenario = doc.at("scenario");
  if (spec.scenario.contains("filter")) spec.filter = spec.scenario.at("filter");
  if (doc.contains("filter")) spec.filter = doc.at("filter");
  if (doc.contains("grid")) {
    const nlohmann::json &g = doc.at("grid");
    require_known_keys(g, {"J", "N_a", "N_p", "B_w", "mode"}, "grid.");
    spec.panels = grid(g, "J", spec.panels);
    spec.array_elements = grid(g, "N_a", spec.array_elements);
    spec.particles = grid(g, "N_p", spec.particles);
    spec.bandwidths = grid(g, "B_w", spec.bandwidths);
    if (g.contains("mode")) {
      spec.modes.clear();
      for (const std::string &m : grid<std::string>(g, "mode", {})) spec.modes.push_back(parse_mode(m));
    }
  }
  spec.n_runs = doc.value("runs", spec.n_runs);
  spec.seed = doc.value("seed", spec.seed);
  spec.n_steps = doc.value("n_steps", spec.n_steps);
  spec.threads = doc.value("threads", spec.threads);
  if (doc.contains("latency")) spec.latency = parse_latency_params(doc.at("latency"));
  spec.validate();
  return spec;
}

Scenario sweep_point_scenario(const SweepSpec &spec, int panels, int array_elements,
                              double bandwidth_hz) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(array_elements))));
  if (side * side != array_elements)
    throw ConfigError("N_a = " + std::to_string(array_elements) + " is not a square array");
  nlohmann::json doc = spec.scenario;
  doc.erase("panels");
  doc["n_panels"] = panels;
  doc["radio"]["array_side"] = side;
  doc["radio"]["bandwidth_hz"] = bandwidth_hz;
  return parse_scenario(doc);
}

std::vector<SweepRow> run_sweep(const SweepSpec &spec, std::ostream *progress) {
  spec.validate();
  std::vector<SweepRow> rows;
  for (int j : spec.panels)
    for (int na : spec.array_elements)
      for (int np : spec.particles)
        for (double bw : spec.bandwidths)
          for (Mode mode : spec.modes) {
            SweepRow row{j, na, np, bw, mode};
            try {
              const Scenario scn = sweep_point_scenario(spec, j, na, bw);
              FilterConfig cfg = parse_filter_config({{"filter", spec.filter}}, scn.dt_s);
              cfg.spa.n_particles = np;
              cfg.spa.mode = mode;
              cfg.spa.validate();
              MonteCarloOptions opts;
              opts.n_steps = spec.n_steps;
              opts.threads = spec.threads;
              const auto results = run_monte_carlo(scn, cfg, spec.n_runs, spec.seed, opts);
              std::vector<double> errs;
              for (const RunResult &r : results)
                for (const StepRecord &s : r.steps) errs.push_back(s.error());
              row.rmse = rmse_scalar(results);
              row.q10 = sample_quantile(errs, 0.1);
              row.q90 = sample_quantile(errs, 0.9);
              row.diverged = divergence_count(results);
              row.mean_chain_latency_s =
                  mean_chain_latency(results, static_cast<std::size_t>(np), spec.latency);
              for (const RunResult &r : results)
                if (!r.error.empty()) {
                  row.status = "error: " + r.error;
                  break;
                }
            } catch (const std::exception &e) {
              row.status = std::string("error: ") + e.what();
            }
            if (progress)
              *progress << fmt::format("J={} N_a={} N_p={} B_w={:g} mode={} rmse={:.4f} {}\n", j,
                                       na, np, bw, to_string(mode), row.rmse, row.status);
            rows.push_back(std::move(row));
          }
  return rows;
}

std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_sweep_csv(std::ostream &out, const std::vector<SweepRow> &rows) {
  out << "J,N_a,N_p,B_w,mode,rmse,q10,q90,diverged_count,mean_chain_latency_s,status\r\n";
  for (const SweepRow &r : rows)
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\r\n", r.panels, r.array_elements,
                       r.particles, r.bandwidth_hz, to_string(r.mode), r.rmse, r.q10, r.q90,
                       r.diverged, r.mean_chain_latency_s, csv_field(r.status));
}

void write_band_csv(std::ostream &out, const ErrorBand &band) {
  out << "time,rmse,q10,q90\r\n";
  for (std::size_t n = 0; n < band.rmse.size(); ++n)
    out << fmt::format("{},{},{},{}\r\n", n + 1, band.rmse[n], band.q10[n], band.q90[n]);
}

void write_runs_csv(std::ostream &out, const std::vector<RunResult> &results) {
  std::size_t n_panels = 0;
  for (const RunResult &r : results)
    if (!r.steps.empty()) n_panels = std::max(n_panels, r.steps.front().r_prob.size());
  out << "run,time,true_x,true_y,est_x,est_y,error";
  for (std::size_t j = 0; j < n_panels; ++j) out << ",r_prob_" << j + 1;
  out << "\r\n";
  for (const RunResult &r : results)
    for (const StepRecord &s : r.steps) {
      out << fmt::format("{},{},{},{},{},{},{}", r.run_id, s.time_index, s.truth.x, s.truth.y,
                         s.estimate.p.x, s.estimate.p.y, s.error());
      for (double p : s.r_prob) out << ',' << fmt::format("{}", p);
      out << "\r\n";
    }
}

}  // namespace dmloc

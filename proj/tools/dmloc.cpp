// Command-line front end: simulation, sweeps, latency grids, plots and the
// TCP panel chain.
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "dmloc/chain.hpp"
#include "dmloc/harness.hpp"
#include "dmloc/latency.hpp"
#include "dmloc/plot.hpp"
#include "dmloc/socket_chain.hpp"

namespace fs = std::filesystem;
using namespace dmloc;
using json = nlohmann::json;

namespace {

void setup_logging() {
  spdlog::set_default_logger(spdlog::stderr_color_mt("dmloc"));
  spdlog::set_level(spdlog::level::warn);
  if (const char *lvl = std::getenv("DMLOC_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

std::ofstream open_out(const fs::path &p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

struct Loaded {
  Scenario scn;
  FilterConfig cfg;
};

Loaded load_config(const json &doc) {
  Loaded l{parse_scenario(doc), {}};
  l.cfg = parse_filter_config(doc.value("filter", json::object()), l.scn.dt_s);
  return l;
}

json resolve_scenario(const json &cfg, const fs::path &base) {
  if (cfg.contains("scenario")) return cfg.at("scenario");
  if (cfg.contains("scenario_file")) {
    fs::path p = cfg.at("scenario_file").get<std::string>();
    return read_json_file(p.is_relative() ? base / p : p);
  }
  return json::object();
}

int cmd_simulate(const fs::path &scenario_file, const std::string &mode, int runs,
                 std::uint64_t seed, const fs::path &out_dir, int steps, const std::string &transport,
                 unsigned threads) {
  Loaded l = load_config(scenario_file.empty() ? json::object() : read_json_file(scenario_file));
  l.cfg.spa.mode = parse_mode(mode);
  MonteCarloOptions opts;
  opts.n_steps = steps;
  opts.threads = threads;
  opts.transport = transport == "socket" ? TransportKind::kSocket : TransportKind::kInProcess;

  const auto results = run_monte_carlo(l.scn, l.cfg, runs, seed, opts);
  fs::create_directories(out_dir / "estimates");
  for (const RunResult &r : results) {
    auto out = open_out(out_dir / "estimates" / fmt::format("run_{:03d}.jsonl", r.run_id));
    for (const StepRecord &s : r.steps) {
      Estimate e;
      e.x = s.estimate;
      out << estimate_json_line(s.time_index, e, s.detected) << '\n';
    }
  }
  {
    auto out = open_out(out_dir / "runs.csv");
    write_runs_csv(out, results);
  }
  const ErrorBand band = rmse_over_time(results);
  {
    auto out = open_out(out_dir / "rmse_time.csv");
    write_band_csv(out, band);
  }
  render_plots(out_dir / "rmse_time.csv", out_dir);
  json summary = {{"runs", runs},
                  {"seed", seed},
                  {"mode", to_string(l.cfg.spa.mode)},
                  {"rmse_m", rmse_scalar(results)},
                  {"diverged", divergence_count(results)},
                  {"steps", results.front().steps.size()}};
  auto out = open_out(out_dir / "summary.json");
  out << summary.dump(2) << '\n';
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_sweep(const fs::path &spec_file, const fs::path &out_dir) {
  const SweepSpec spec = parse_sweep_spec(read_json_file(spec_file), spec_file.parent_path());
  const auto rows = run_sweep(spec, &std::cerr);
  {
    auto out = open_out(out_dir / "sweep.csv");
    write_sweep_csv(out, rows);
  }
  for (const fs::path &p : render_plots(out_dir / "sweep.csv", out_dir)) std::cout << p.string() << '\n';
  return 0;
}

int cmd_latency(const fs::path &params_file, const fs::path &grid_file, const fs::path &out_file) {
  const LatencyParams params =
      params_file.empty() ? LatencyParams{} : parse_latency_params(read_json_file(params_file));
  const json g = grid_file.empty() ? json::object() : read_json_file(grid_file);
  require_known_keys(g, {"J", "N_p", "n_meas", "anchors_per_panel"}, "grid.");
  const auto js = g.value("J", kPanelGrid);
  const auto nps = g.value("N_p", kParticleGrid);
  const auto n_meas = g.value("n_meas", std::size_t{1});
  const auto anchors = g.value("anchors_per_panel", std::size_t{1});
  std::ostream *os = &std::cout;
  std::ofstream file;
  if (!out_file.empty()) {
    file = open_out(out_file);
    os = &file;
  }
  *os << "J,N_p,total_s\r\n";
  for (int j : js)
    for (int np : nps) {
      const auto n = static_cast<std::size_t>(j);
      const LatencyReport r = chain_latency(n, std::vector<std::size_t>(n, n_meas),
                                            static_cast<std::size_t>(np), params,
                                            std::vector<std::size_t>(n, anchors));
      *os << fmt::format("{},{},{}\r\n", j, np, r.total_s);
    }
  return 0;
}

int cmd_serve(const std::string &bind, const std::string &next, const fs::path &config_file) {
  const json cfg_doc = read_json_file(config_file);
  require_known_keys(cfg_doc,
                     {"scenario", "scenario_file", "filter", "panel", "seed", "run", "mode",
                      "collector"},
                     "");
  json scn_doc = resolve_scenario(cfg_doc, config_file.parent_path());
  if (cfg_doc.contains("filter")) scn_doc["filter"] = cfg_doc.at("filter");
  Loaded l = load_config(scn_doc);
  if (cfg_doc.contains("mode")) l.cfg.spa.mode = parse_mode(cfg_doc.at("mode").get<std::string>());
  const int panel_id = cfg_doc.value("panel", 1);
  if (panel_id < 1 || panel_id > static_cast<int>(l.scn.panels.size()))
    throw ConfigError("panel must be within 1.." + std::to_string(l.scn.panels.size()));
  const std::uint64_t seed = cfg_doc.value("seed", std::uint64_t{1});
  const std::uint32_t run = cfg_doc.value("run", 0u);
  const Panel panel = l.scn.panels[static_cast<std::size_t>(panel_id - 1)];

  ServerOptions opts;
  opts.bind = Endpoint::parse(bind);
  opts.next = Endpoint::parse(next);
  if (cfg_doc.contains("collector"))
    opts.collector = Endpoint::parse(cfg_doc.at("collector").get<std::string>());
  const Scenario scn = l.scn;
  MeasurementSource source = [scn, panel, seed, run](int t) {
    if (t < 1 || t > static_cast<int>(scn.trajectory.size()))
      throw ProtocolError("time " + std::to_string(t) + " is past the trajectory");
    return synthesize_panel(scn, panel, trajectory_index(t), seed, run);
  };
  PanelServer server(std::make_unique<PanelNode>(l.scn, panel, l.cfg, seed, run,
                                                 static_cast<int>(l.scn.panels.size())),
                     source, opts);
  std::cerr << "panel " << panel_id << " listening on " << server.endpoint().str() << std::endl;
  server.run();
  return 0;
}

int cmd_collect(const std::string &bind, const std::string &head, const fs::path &config_file,
                int steps, const fs::path &out_file) {
  const json cfg_doc = config_file.empty() ? json::object() : read_json_file(config_file);
  json scn_doc = resolve_scenario(cfg_doc, config_file.parent_path());
  if (cfg_doc.contains("filter")) scn_doc["filter"] = cfg_doc.at("filter");
  Loaded l = load_config(scn_doc);
  const std::uint64_t seed = cfg_doc.value("seed", std::uint64_t{1});
  const std::uint32_t run = cfg_doc.value("run", 0u);

  Collector collector(Endpoint::parse(bind), std::chrono::milliseconds(30000));
  collector.set_head(Endpoint::parse(head));
  std::ostream *os = &std::cout;
  std::ofstream file;
  if (!out_file.empty()) {
    file = open_out(out_file);
    os = &file;
  }
  ParticleCloud belief = initial_belief(l.scn, l.cfg, seed, run);
  const int n = steps > 0 ? steps : static_cast<int>(l.scn.trajectory.size());
  for (int k = 0; k < n; ++k) {
    try {
      Collector::Output out = collector.exchange(belief);
      belief = std::move(out.belief);
      *os << estimate_json_line(belief.time_index, mmse_estimates(belief, {}, l.cfg.spa.p_de),
                                out.detected)
          << std::endl;
    } catch (const TimestepAborted &e) {
      *os << json{{"time", e.time_index()}, {"aborted", true}, {"panel", e.panel_id()},
                  {"error", e.what()}}
                 .dump()
          << std::endl;
      return 3;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  setup_logging();
  std::signal(SIGPIPE, SIG_IGN);
  CLI::App app{"Distributed multipath-aware localization over a daisy chain of panels"};
  app.require_subcommand(1);

  std::string scenario, mode = "los", transport = "inprocess";
  fs::path out, spec, params, grid, panel_config;
  int runs = kDefaultRuns, steps = 0;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string bind, next, head;

  auto *sim = app.add_subcommand("simulate", "Monte-Carlo runs of one scenario");
  sim->add_option("--scenario", scenario, "scenario JSON (defaults when omitted)");
  sim->add_option("--mode", mode, "los or mpc")->check(CLI::IsMember({"los", "mpc"}));
  sim->add_option("--runs", runs, "number of runs")->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "base seed");
  sim->add_option("--out", out, "output directory")->required();
  sim->add_option("--steps", steps, "truncate the trajectory (0 = all)");
  sim->add_option("--transport", transport, "inprocess or socket")
      ->check(CLI::IsMember({"inprocess", "socket"}));
  sim->add_option("--threads", threads, "worker threads (0 = all cores)");

  auto *sweep = app.add_subcommand("sweep", "parameter sweep to CSV and SVG");
  sweep->add_option("--spec", spec, "sweep spec JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "output directory")->required();

  auto *lat = app.add_subcommand("latency", "latency model over a (J, N_p) grid");
  lat->add_option("--params", params, "latency params JSON");
  lat->add_option("--grid", grid, "grid JSON");
  lat->add_option("--out", out, "output CSV (stdout when omitted)");

  auto *plot = app.add_subcommand("plot", "render SVG plots from a CSV");
  plot->add_option("--csv", spec, "input CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", out, "output directory")->required();

  auto *serve = app.add_subcommand("serve-panel", "run one panel node over TCP");
  serve->add_option("--bind", bind, "HOST:PORT")->required();
  serve->add_option("--next", next, "next hop HOST:PORT (the collector for the tail)")->required();
  serve->add_option("--panel-config", panel_config, "panel config JSON")->required()->check(CLI::ExistingFile);

  auto *collect = app.add_subcommand("collect", "drive a TCP chain and print estimates");
  collect->add_option("--bind", bind, "HOST:PORT the tail connects to")->required();
  collect->add_option("--head", head, "HOST:PORT of panel 1")->required();
  collect->add_option("--config", panel_config, "config JSON (scenario, filter, seed, run)");
  collect->add_option("--steps", steps, "number of time steps (0 = whole trajectory)");
  collect->add_option("--out", out, "JSON-lines output (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return cmd_simulate(scenario, mode, runs, seed, out, steps, transport, threads);
    if (*sweep) return cmd_sweep(spec, out);
    if (*lat) return cmd_latency(params, grid, out);
    if (*plot) {
      for (const fs::path &p : render_plots(spec, out)) std::cout << p.string() << '\n';
      return 0;
    }
    if (*serve) return cmd_serve(bind, next, panel_config);
    if (*collect) return cmd_collect(bind, head, panel_config, steps, out);
  } catch (const std::exception &e) {
    spdlog::error("{}", e.what());
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include "dmloc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dmloc {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// Corner orientations point along the inward diagonal.
struct ArcPoint {
  Point2 pos;
  double orientation;
};

ArcPoint point_at_arc(double s, const Room &room) {
  const double w = room.width;
  const double h = room.height;
  const double perimeter = 2.0 * (w + h);
  s = std::fmod(s, perimeter);
  if (s < 0) s += perimeter;

  constexpr double eps = 1e-9;
  auto near = [](double a, double b) { return std::abs(a - b) <= eps; };
  if (near(s, 0.0) || near(s, perimeter)) return {{0.0, h}, -kPi / 4};
  if (near(s, w)) return {{w, h}, -3 * kPi / 4};
  if (near(s, w + h)) return {{w, 0.0}, 3 * kPi / 4};
  if (near(s, 2 * w + h)) return {{0.0, 0.0}, kPi / 4};

  if (s < w) return {{s, h}, -kPi / 2};
  if (s < w + h) return {{w, h - (s - w)}, kPi};
  if (s < 2 * w + h) return {{w - (s - w - h), 0.0}, kPi / 2};
  return {{0.0, s - 2 * w - h}, 0.0};
}

double number(const json &obj, const std::string &key, const std::string &ctx, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json &v = obj.at(key);
  if (!v.is_number()) throw ConfigError(ctx + key + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(ctx + key + " must be finite");
  return d;
}

int integer(const json &obj, const std::string &key, const std::string &ctx, int fallback) {
  if (!obj.contains(key)) return fallback;
  const json &v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(ctx + key + " must be an integer");
  return v.get<int>();
}

bool boolean(const json &obj, const std::string &key, const std::string &ctx, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json &v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(ctx + key + " must be a boolean");
  return v.get<bool>();
}

const json &section(const json &doc, const std::string &key) {
  static const json empty = json::object();
  if (!doc.contains(key)) return empty;
  const json &s = doc.at(key);
  if (!s.is_object()) throw ConfigError(key + " must be an object");
  return s;
}

Point2 point(const json &v, const std::string &ctx) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(ctx + " must be a [x, y] pair");
  return {v[0].get<double>(), v[1].get<double>()};
}

json to_json(Point2 p) { return json::array({p.x, p.y}); }

std::vector<Point2> default_waypoints() { return {{4, 15}, {26, 15}, {26, 26}, {4, 26}}; }

}  // namespace

std::vector<Wall> Room::walls() const {
  return {
      {{0, height}, {width, height}, reflective},  // top
      {{width, height}, {width, 0}, reflective},   // right
      {{width, 0}, {0, 0}, reflective},            // bottom
      {{0, 0}, {0, height}, reflective},           // left
  };
}

bool Room::contains(Point2 p) const {
  return p.x > 0.0 && p.x < width && p.y > 0.0 && p.y < height;
}

std::vector<Wall> Scenario::all_walls() const {
  std::vector<Wall> walls = room.walls();
  walls.insert(walls.end(), interior.begin(), interior.end());
  return walls;
}

void Scenario::validate() const {
  if (!(room.width > 0) || !(room.height > 0)) throw ConfigError("room dimensions must be positive");
  for (const Wall &w : interior) {
    try {
      validate_wall(w);
    } catch (const std::invalid_argument &e) {
      throw ConfigError(std::string("interior_walls: ") + e.what());
    }
  }
  if (panels.empty()) throw ConfigError("n_panels must be at least 1");
  if (trajectory.empty()) throw ConfigError("trajectory.n_steps must be at least 1");
  if (!(dt_s > 0)) throw ConfigError("dt_s must be positive");
  if (!(radio.carrier_hz > 0)) throw ConfigError("carrier_hz must be positive");
  if (!(radio.bandwidth_hz > 0)) throw ConfigError("bandwidth_hz must be positive");
  if (radio.array_side < 1) throw ConfigError("array_side must be at least 1");
  if (!(radio.element_spacing_m > 0)) throw ConfigError("element_spacing_m must be positive");
  const ClutterParams &c = measurement.clutter;
  if (!(c.mu_fa >= 0)) throw ConfigError("mu_fa must be non-negative");
  if (!(c.d_max > 0)) throw ConfigError("d_max must be positive");
  if (!(c.u_th > 0)) throw ConfigError("u_th must be positive");
  if (!(measurement.reflection_loss_db >= 0))
    throw ConfigError("reflection_loss_db must be non-negative");
  if (!(measurement.aoa_floor > 0 && measurement.aoa_floor <= 1))
    throw ConfigError("aoa_floor must be in (0, 1]");
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    const Vec2 jump = trajectory[i].p - trajectory[i - 1].p - trajectory[i - 1].v * dt_s;
    if (norm(jump) > 0.5) throw ConfigError("trajectory violates near-constant-velocity motion");
  }
}

std::vector<Panel> place_panels(int n_panels, const Room &room) {
  if (n_panels <= 0 || n_panels > 64) throw std::invalid_argument("n_panels must be in 1..64");
  std::vector<Panel> panels;
  auto add = [&](ArcPoint ap) {
    panels.push_back({static_cast<int>(panels.size()) + 1, ap.pos, ap.orientation});
  };
  if (n_panels == 1) {
    add(point_at_arc(0.0, room));
  } else if (n_panels == 2) {
    add(point_at_arc(0.0, room));
    add(point_at_arc(room.width, room));
  } else {
    const double spacing = 2.0 * (room.width + room.height) / n_panels;
    for (int k = 0; k < n_panels; ++k) add(point_at_arc((k + 0.5) * spacing, room));
  }
  return panels;
}

double loop_length(const std::vector<Point2> &waypoints) {
  double total = 0.0;
  for (std::size_t i = 0; i < waypoints.size(); ++i)
    total += distance(waypoints[i], waypoints[(i + 1) % waypoints.size()]);
  return total;
}

std::vector<TrajectoryPoint> gen_trajectory(const std::vector<Point2> &waypoints, double speed,
                                            double dt, int n_steps, const Room &room,
                                            const std::vector<Wall> &interior) {
  if (waypoints.size() < 2) throw std::invalid_argument("trajectory needs at least 2 waypoints");
  if (!(speed > 0)) throw std::invalid_argument("trajectory speed must be positive");
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  if (n_steps < 1) throw std::invalid_argument("n_steps must be at least 1");
  for (const Point2 &w : waypoints) {
    if (!room.contains(w)) throw std::invalid_argument("waypoint outside room");
    for (const Wall &iw : interior)
      if (point_on_wall(w, iw)) throw std::invalid_argument("waypoint lies on an interior wall");
  }

  const std::size_t n_wp = waypoints.size();
  std::vector<double> cumulative(n_wp + 1, 0.0);
  for (std::size_t i = 0; i < n_wp; ++i)
    cumulative[i + 1] = cumulative[i] + distance(waypoints[i], waypoints[(i + 1) % n_wp]);
  const double total = cumulative.back();
  if (!(total > 0)) throw std::invalid_argument("waypoints must not all coincide");

  auto at = [&](double s) {
    s = std::fmod(s, total);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
    const std::size_t seg = std::min<std::size_t>(std::distance(cumulative.begin(), it) - 1, n_wp - 1);
    const Point2 a = waypoints[seg];
    const Point2 b = waypoints[(seg + 1) % n_wp];
    const double len = cumulative[seg + 1] - cumulative[seg];
    const double t = len > 0 ? (s - cumulative[seg]) / len : 0.0;
    return a + (b - a) * t;
  };

  std::vector<TrajectoryPoint> track(n_steps);
  for (int k = 0; k < n_steps; ++k) track[k].p = at(k * speed * dt);
  for (int k = 0; k + 1 < n_steps; ++k) track[k].v = (track[k + 1].p - track[k].p) * (1.0 / dt);
  if (n_steps >= 2) {
    track[n_steps - 1].v = track[n_steps - 2].v;
  } else {
    const Vec2 dir = waypoints[1] - waypoints[0];
    track[0].v = dir * (speed / norm(dir));
  }
  return track;
}

Scenario default_scenario() { return parse_scenario(json::object()); }

Scenario parse_scenario(const json &doc, const std::vector<std::string> &foreign_sections) {
  if (!doc.is_object()) throw ConfigError("scenario document must be a JSON object");
  std::vector<std::string> known = {"room",       "interior_walls", "n_panels", "panels",
                                    "trajectory", "radio",          "measurement"};
  known.insert(known.end(), foreign_sections.begin(), foreign_sections.end());
  require_known_keys(doc, known, "");

  Scenario scn;

  const json &room = section(doc, "room");
  require_known_keys(room, {"width", "height", "reflective"}, "room.");
  scn.room.width = number(room, "width", "room.", 30.0);
  scn.room.height = number(room, "height", "room.", 30.0);
  scn.room.reflective = boolean(room, "reflective", "room.", true);
  if (!(scn.room.width > 0)) throw ConfigError("room.width must be positive");
  if (!(scn.room.height > 0)) throw ConfigError("room.height must be positive");

  if (doc.contains("interior_walls")) {
    const json &walls = doc.at("interior_walls");
    if (!walls.is_array()) throw ConfigError("interior_walls must be an array");
    for (const json &w : walls) {
      if (!w.is_object()) throw ConfigError("interior_walls entries must be objects");
      require_known_keys(w, {"a", "b", "reflective"}, "interior_walls[].");
      if (!w.contains("a") || !w.contains("b"))
        throw ConfigError("interior_walls[] requires a and b");
      scn.interior.push_back({point(w.at("a"), "interior_walls[].a"),
                              point(w.at("b"), "interior_walls[].b"),
                              boolean(w, "reflective", "interior_walls[].", false)});
    }
  } else {
    scn.interior = {{{10, 10}, {20, 10}, false}, {{10, 20}, {20, 20}, false}};
  }

  if (doc.contains("panels") && doc.contains("n_panels"))
    throw ConfigError("panels and n_panels are mutually exclusive");
  if (doc.contains("panels")) {
    const json &ps = doc.at("panels");
    if (!ps.is_array() || ps.empty()) throw ConfigError("panels must be a non-empty array");
    for (const json &p : ps) {
      if (!p.is_object()) throw ConfigError("panels entries must be objects");
      require_known_keys(p, {"x", "y", "orientation"}, "panels[].");
      Panel panel;
      panel.id = static_cast<int>(scn.panels.size()) + 1;
      panel.pos = {number(p, "x", "panels[].", NAN), number(p, "y", "panels[].", NAN)};
      panel.orientation = number(p, "orientation", "panels[].", 0.0);
      if (std::isnan(panel.pos.x) || std::isnan(panel.pos.y))
        throw ConfigError("panels[] requires x and y");
      if (panel.pos.x < 0 || panel.pos.x > scn.room.width || panel.pos.y < 0 ||
          panel.pos.y > scn.room.height)
        throw ConfigError("panels[] position outside room");
      scn.panels.push_back(panel);
    }
  } else {
    const int j = integer(doc, "n_panels", "", 24);
    if (j < 1 || j > 64) throw ConfigError("n_panels must be in 1..64");
    scn.panels = place_panels(j, scn.room);
  }

  const json &radio = section(doc, "radio");
  require_known_keys(
      radio, {"carrier_hz", "bandwidth_hz", "array_side", "element_spacing_m", "snr_ref_db"},
      "radio.");
  scn.radio.carrier_hz = number(radio, "carrier_hz", "radio.", 28e9);
  if (!(scn.radio.carrier_hz > 0)) throw ConfigError("carrier_hz must be positive");
  scn.radio.bandwidth_hz = number(radio, "bandwidth_hz", "radio.", 400e6);
  scn.radio.array_side = integer(radio, "array_side", "radio.", 5);
  scn.radio.element_spacing_m =
      number(radio, "element_spacing_m", "radio.", scn.radio.wavelength() / 4.0);
  scn.radio.snr_ref_db = number(radio, "snr_ref_db", "radio.", 24.0);

  const json &meas = section(doc, "measurement");
  require_known_keys(meas,
                     {"mu_fa", "d_max", "u_th", "reflection_loss_db", "aoa_floor", "noise_free",
                      "force_detection"},
                     "measurement.");
  MeasurementParams &mp = scn.measurement;
  mp.clutter.mu_fa = number(meas, "mu_fa", "measurement.", 1.0);
  mp.clutter.d_max = number(meas, "d_max", "measurement.", 50.0);
  mp.clutter.u_th = number(meas, "u_th", "measurement.", 1.5);
  mp.reflection_loss_db = number(meas, "reflection_loss_db", "measurement.", 6.0);
  mp.aoa_floor = number(meas, "aoa_floor", "measurement.", 0.1);
  mp.noise_free = boolean(meas, "noise_free", "measurement.", false);
  mp.force_detection = boolean(meas, "force_detection", "measurement.", false);

  const json &traj = section(doc, "trajectory");
  require_known_keys(traj, {"waypoints", "speed", "n_steps", "dt_s"}, "trajectory.");
  scn.dt_s = number(traj, "dt_s", "trajectory.", 0.1);
  if (!(scn.dt_s > 0)) throw ConfigError("dt_s must be positive");
  TrajectorySpec &ts = scn.trajectory_spec;
  ts.n_steps = integer(traj, "n_steps", "trajectory.", 526);
  if (ts.n_steps < 1) throw ConfigError("trajectory.n_steps must be at least 1");
  if (traj.contains("waypoints")) {
    const json &wps = traj.at("waypoints");
    if (!wps.is_array()) throw ConfigError("trajectory.waypoints must be an array");
    for (const json &w : wps) ts.waypoints.push_back(point(w, "trajectory.waypoints[]"));
  } else {
    ts.waypoints = default_waypoints();
  }
  if (ts.waypoints.size() < 2) throw ConfigError("trajectory.waypoints needs at least 2 points");
  ts.speed = number(traj, "speed", "trajectory.", 0.0);
  if (ts.speed < 0) throw ConfigError("trajectory.speed must be non-negative");
  if (ts.speed == 0.0) {
    const int intervals = std::max(ts.n_steps - 1, 1);
    ts.speed = loop_length(ts.waypoints) / (intervals * scn.dt_s);
  }
  try {
    scn.trajectory =
        gen_trajectory(ts.waypoints, ts.speed, scn.dt_s, ts.n_steps, scn.room, scn.interior);
  } catch (const std::invalid_argument &e) {
    throw ConfigError(std::string("trajectory.waypoints: ") + e.what());
  }

  scn.validate();
  return scn;
}

json scenario_to_json(const Scenario &scn) {
  json doc;
  doc["room"] = {{"width", scn.room.width},
                 {"height", scn.room.height},
                 {"reflective", scn.room.reflective}};
  json walls = json::array();
  for (const Wall &w : scn.interior)
    walls.push_back({{"a", to_json(w.a)}, {"b", to_json(w.b)}, {"reflective", w.reflective}});
  doc["interior_walls"] = walls;
  json panels = json::array();
  for (const Panel &p : scn.panels)
    panels.push_back({{"x", p.pos.x}, {"y", p.pos.y}, {"orientation", p.orientation}});
  doc["panels"] = panels;
  json wps = json::array();
  for (const Point2 &w : scn.trajectory_spec.waypoints) wps.push_back(to_json(w));
  doc["trajectory"] = {{"waypoints", wps},
                       {"speed", scn.trajectory_spec.speed},
                       {"n_steps", scn.trajectory_spec.n_steps},
                       {"dt_s", scn.dt_s}};
  doc["radio"] = {{"carrier_hz", scn.radio.carrier_hz},
                  {"bandwidth_hz", scn.radio.bandwidth_hz},
                  {"array_side", scn.radio.array_side},
                  {"element_spacing_m", scn.radio.element_spacing_m},
                  {"snr_ref_db", scn.radio.snr_ref_db}};
  const MeasurementParams &mp = scn.measurement;
  doc["measurement"] = {{"mu_fa", mp.clutter.mu_fa},
                        {"d_max", mp.clutter.d_max},
                        {"u_th", mp.clutter.u_th},
                        {"reflection_loss_db", mp.reflection_loss_db},
                        {"aoa_floor", mp.aoa_floor},
                        {"noise_free", mp.noise_free},
                        {"force_detection", mp.force_detection}};
  return doc;
}

json read_json_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  try {
    return json::parse(text);
  } catch (const json::parse_error &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path &path) {
  return parse_scenario(read_json_file(path));
}

void save_scenario(const Scenario &scn, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << scenario_to_json(scn).dump(2) << '\n';
}

void require_known_keys(const json &obj, const std::vector<std::string> &known,
                        const std::string &context) {
  for (const auto &[key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key " + context + key);
  }
}

}  // namespace dmloc

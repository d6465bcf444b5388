#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmloc/geometry.hpp"

namespace dmloc {

inline constexpr double kSpeedOfLight = 299'792'458.0;

/// Raised for malformed or invalid configuration. The message names the key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RadioConfig {
  double carrier_hz = 28e9;
  double bandwidth_hz = 400e6;
  int array_side = 5;  // sqrt(N_a)
  double element_spacing_m = kSpeedOfLight / 28e9 / 4.0;
  double snr_ref_db = 24.0;  // per element, at 1 m

  double wavelength() const { return kSpeedOfLight / carrier_hz; }
  int n_elements() const { return array_side * array_side; }
  bool operator==(const RadioConfig &) const = default;
};

/// Clutter and detection parameters shared by synthesis and the filter.
struct ClutterParams {
  double mu_fa = 1.0;   // mean false alarms per panel per step
  double d_max = 50.0;  // m, false-alarm range support
  double u_th = 1.5;    // amplitude detection threshold
  bool operator==(const ClutterParams &) const = default;
};

struct MeasurementParams {
  ClutterParams clutter;
  double reflection_loss_db = 6.0;
  double aoa_floor = 0.1;
  // Test switches: zero measurement noise, detection probability forced to 1.
  bool noise_free = false;
  bool force_detection = false;
  bool operator==(const MeasurementParams &) const = default;
};

struct Room {
  double width = 30.0;
  double height = 30.0;
  bool reflective = true;

  std::vector<Wall> walls() const;
  bool contains(Point2 p) const;
  bool operator==(const Room &) const = default;
};

struct Panel {
  int id = 0;  // 1-based
  Point2 pos;
  double orientation = 0.0;  // boresight direction, radians
  bool operator==(const Panel &) const = default;
};

struct TrajectoryPoint {
  Point2 p;
  Vec2 v;
  bool operator==(const TrajectoryPoint &) const = default;
};

struct TrajectorySpec {
  std::vector<Point2> waypoints;
  double speed = 0.0;  // m/s; 0 selects "one closed loop over n_steps"
  int n_steps = 526;
  bool operator==(const TrajectorySpec &) const = default;
};

struct Scenario {
  Room room;
  std::vector<Wall> interior;
  std::vector<Panel> panels;
  TrajectorySpec trajectory_spec;
  std::vector<TrajectoryPoint> trajectory;
  double dt_s = 0.1;
  RadioConfig radio;
  MeasurementParams measurement;

  /// Outer walls followed by interior walls.
  std::vector<Wall> all_walls() const;
  void validate() const;
  bool operator==(const Scenario &) const = default;
};

/// J panels evenly spaced by perimeter arc length, running clockwise from the
/// upper-left corner at offsets (k + 1/2) * P / J, each facing into the room.
/// J=2 uses the two upper corners and J=1 the upper-left corner.
std::vector<Panel> place_panels(int n_panels, const Room &room);

/// Constant-speed sampling of the closed polyline through `waypoints`.
/// Velocities are forward differences of the sampled positions (the last
/// sample reuses the previous difference).
std::vector<TrajectoryPoint> gen_trajectory(const std::vector<Point2> &waypoints, double speed,
                                            double dt, int n_steps, const Room &room,
                                            const std::vector<Wall> &interior = {});

/// Closed-loop length of the polyline through the waypoints (last back to first).
double loop_length(const std::vector<Point2> &waypoints);

Scenario default_scenario();

/// Parses a scenario document. Unknown keys are rejected; keys listed in
/// `foreign_sections` are skipped (they belong to other config consumers).
Scenario parse_scenario(const nlohmann::json &doc,
                        const std::vector<std::string> &foreign_sections = {"filter"});
nlohmann::json scenario_to_json(const Scenario &scn);

Scenario load_scenario(const std::filesystem::path &path);
void save_scenario(const Scenario &scn, const std::filesystem::path &path);

/// Reads a JSON file; empty files parse as an empty object.
nlohmann::json read_json_file(const std::filesystem::path &path);

/// Strict key check used by all config parsers.
void require_known_keys(const nlohmann::json &obj, const std::vector<std::string> &known,
                        const std::string &context);

}  // namespace dmloc

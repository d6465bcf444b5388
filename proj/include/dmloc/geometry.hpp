#pragma once

#include <cmath>
#include <optional>
#include <span>

namespace dmloc {

/// Planar point or vector, meters (or m/s when used as a velocity).
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Point2 operator+(Point2 o) const { return {x + o.x, y + o.y}; }
  constexpr Point2 operator-(Point2 o) const { return {x - o.x, y - o.y}; }
  constexpr Point2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Point2 &operator+=(Point2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Point2 &) const = default;
};

using Vec2 = Point2;

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

/// Wraps an angle to (-pi, pi].
double wrap_angle(double rad);

struct Wall {
  Point2 a;
  Point2 b;
  bool reflective = false;

  double length() const { return distance(a, b); }
  bool operator==(const Wall &) const = default;
};

/// Throws std::invalid_argument for a zero-length or non-finite wall.
void validate_wall(const Wall &w);

/// True iff the closed segment [a,b] shares at least one point with wall w.
/// Touching at an endpoint and collinear overlap both count as intersecting.
bool segment_intersects(Point2 a, Point2 b, const Wall &w);

/// True iff p lies on the wall segment (within 1e-9 m).
bool point_on_wall(Point2 p, const Wall &w);

/// Reflection of p across the infinite line through w.
Point2 mirror_point(Point2 p, const Wall &w);

/// Line-of-sight test. Walls that contain either endpoint are ignored so that
/// panels mounted on a wall do not occlude themselves.
bool los_visible(Point2 agent, Point2 pa, std::span<const Wall> walls);

struct BouncePath {
  Point2 va;
  double d = 0.0;
  Point2 reflection_point;
};

/// Specular single-bounce path agent -> w -> pa, if geometrically valid and
/// unobstructed by the other walls.
std::optional<BouncePath> single_bounce_path(Point2 agent, Point2 pa, const Wall &w,
                                             std::span<const Wall> walls);

/// Angle of arrival of a ray from src, in the local frame of a panel at pa whose
/// boresight points along `orientation`. Result in (-pi, pi].
double aoa_at_panel(Point2 pa, double orientation, Point2 src);

}  // namespace dmloc

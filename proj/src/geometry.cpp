#include "dmloc/geometry.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace dmloc {

namespace {

constexpr double kOnWallTol = 1e-9;

// Sign of the turn a -> b -> c with a relative dead band.
int orient(Point2 a, Point2 b, Point2 c) {
  const Vec2 ab = b - a;
  const Vec2 ac = c - a;
  const double v = cross(ab, ac);
  const double scale = std::max(1.0, norm(ab) * norm(ac));
  if (std::abs(v) <= 1e-12 * scale) return 0;
  return v > 0 ? 1 : -1;
}

// c collinear with [a,b]: is it within the bounding box?
bool on_collinear_segment(Point2 a, Point2 b, Point2 c) {
  return std::min(a.x, b.x) - kOnWallTol <= c.x && c.x <= std::max(a.x, b.x) + kOnWallTol &&
         std::min(a.y, b.y) - kOnWallTol <= c.y && c.y <= std::max(a.y, b.y) + kOnWallTol;
}

}  // namespace

double wrap_angle(double rad) {
  double r = std::remainder(rad, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

void validate_wall(const Wall &w) {
  if (!std::isfinite(w.a.x) || !std::isfinite(w.a.y) || !std::isfinite(w.b.x) ||
      !std::isfinite(w.b.y))
    throw std::invalid_argument("wall endpoints must be finite");
  if (!(w.length() > 0.0)) throw std::invalid_argument("wall must have positive length");
}

bool segment_intersects(Point2 a, Point2 b, const Wall &w) {
  const int o1 = orient(a, b, w.a);
  const int o2 = orient(a, b, w.b);
  const int o3 = orient(w.a, w.b, a);
  const int o4 = orient(w.a, w.b, b);

  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_collinear_segment(a, b, w.a)) return true;
  if (o2 == 0 && on_collinear_segment(a, b, w.b)) return true;
  if (o3 == 0 && on_collinear_segment(w.a, w.b, a)) return true;
  if (o4 == 0 && on_collinear_segment(w.a, w.b, b)) return true;
  return false;
}

bool point_on_wall(Point2 p, const Wall &w) {
  const Vec2 d = w.b - w.a;
  const double len2 = dot(d, d);
  const double t = std::clamp(dot(p - w.a, d) / len2, 0.0, 1.0);
  return distance(p, w.a + d * t) <= kOnWallTol;
}

Point2 mirror_point(Point2 p, const Wall &w) {
  const Vec2 d = w.b - w.a;
  const double t = dot(p - w.a, d) / dot(d, d);
  const Point2 foot = w.a + d * t;
  return foot * 2.0 - p;
}

bool los_visible(Point2 agent, Point2 pa, std::span<const Wall> walls) {
  for (const Wall &w : walls) {
    if (point_on_wall(pa, w) || point_on_wall(agent, w)) continue;
    if (segment_intersects(agent, pa, w)) return false;
  }
  return true;
}

std::optional<BouncePath> single_bounce_path(Point2 agent, Point2 pa, const Wall &w,
                                             std::span<const Wall> walls) {
  const Point2 va = mirror_point(pa, w);
  if (distance(va, pa) <= kOnWallTol) return std::nullopt;  // pa sits on the mirror line

  const Vec2 dir = w.b - w.a;
  const double s_agent = cross(dir, agent - w.a);
  const double s_va = cross(dir, va - w.a);
  if (!(s_agent * s_va < 0.0)) return std::nullopt;

  const double t = s_agent / (s_agent - s_va);
  const Point2 rp = agent + (va - agent) * t;
  const double along = dot(rp - w.a, dir) / dot(dir, dir);
  const double edge = kOnWallTol / w.length();
  if (!(along > edge && along < 1.0 - edge)) return std::nullopt;

  if (!los_visible(agent, rp, walls) || !los_visible(rp, pa, walls)) return std::nullopt;
  return BouncePath{va, distance(agent, va), rp};
}

double aoa_at_panel(Point2 pa, double orientation, Point2 src) {
  const Vec2 d = src - pa;
  return wrap_angle(std::atan2(d.y, d.x) - orientation);
}

}  // namespace dmloc

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "layerseg/scene.hpp"

namespace layerseg {
namespace {

// Roots of A t^2 + B t + C, ascending. Degenerate A falls back to linear.
int solve_quadratic(double A, double B, double C, std::array<double, 2>& t) {
  if (std::abs(A) < 1e-14) {
    if (std::abs(B) < 1e-14) return 0;
    t[0] = -C / B;
    return 1;
  }
  const double disc = B * B - 4.0 * A * C;
  if (disc < 0.0) return 0;
  const double sq = std::sqrt(disc);
  // Numerically stable form.
  const double q = -0.5 * (B + std::copysign(sq, B));
  double t0 = q / A;
  double t1 = (q != 0.0) ? C / q : t0;
  if (t0 > t1) std::swap(t0, t1);
  t[0] = t0;
  t[1] = t1;
  return 2;
}

double segment_distance_2d(double px, double py, double ax, double ay, double bx,
                           double by) {
  const double dx = bx - ax;
  const double dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double h = 0.0;
  if (len2 > 0.0) h = std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0);
  return std::hypot(px - ax - h * dx, py - ay - h * dy);
}

// Distance from (s, rho) to the arc of the circle of radius R centred at
// (c, 0) restricted to s in [x1, x2] and rho >= 0.
double arc_distance(double s, double rho, double c, double R, double x1, double x2) {
  const double lo = std::acos(std::clamp((x2 - c) / R, -1.0, 1.0));
  const double hi = std::acos(std::clamp((x1 - c) / R, -1.0, 1.0));
  const double ang = std::atan2(rho, s - c);
  if (ang >= lo && ang <= hi) return std::abs(std::hypot(s - c, rho) - R);
  const double d1 = std::hypot(s - c - R * std::cos(lo), rho - R * std::sin(lo));
  const double d2 = std::hypot(s - c - R * std::cos(hi), rho - R * std::sin(hi));
  return std::min(d1, d2);
}

}  // namespace

std::optional<double> Patch::intersect(const Vec3& origin, const Vec3& dir, double t_min,
                                       double t_max) const {
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](double t, double s, double lo, double hi) {
    if (t <= t_min || t >= t_max || t >= best) return;
    if (s < lo || s > hi) return;
    if (s < s_lo || s > s_hi) return;
    best = t;
  };
  const Vec3 w = origin - a;
  const double wu = w.dot(u);
  const double du = dir.dot(u);
  const Vec3 wp = w - wu * u;
  const Vec3 dp = dir - du * u;
  std::array<double, 2> t{};

  if (kind == Kind::Cone) {
    const double k = (r_hi - r_lo) / (s_hi - s_lo);
    const double c0 = r_lo + k * (wu - s_lo);
    const double c1 = k * du;
    const int n = solve_quadratic(dp.squaredNorm() - c1 * c1, 2.0 * (wp.dot(dp) - c0 * c1),
                                  wp.squaredNorm() - c0 * c0, t);
    for (int i = 0; i < n; ++i) {
      const double s = wu + t[i] * du;
      // Reject the mirrored nappe where the linear radius goes negative.
      if (c0 + c1 * t[i] < 0.0) continue;
      consider(t[i], s, s_lo, s_hi);
    }
  } else {
    const double inf = std::numeric_limits<double>::infinity();
    int n = solve_quadratic(dp.squaredNorm(), 2.0 * wp.dot(dp),
                            wp.squaredNorm() - radius * radius, t);
    for (int i = 0; i < n; ++i) consider(t[i], wu + t[i] * du, 0.0, length);
    const double dd = dir.squaredNorm();
    n = solve_quadratic(dd, 2.0 * w.dot(dir), w.squaredNorm() - radius * radius, t);
    for (int i = 0; i < n; ++i) consider(t[i], wu + t[i] * du, -inf, 0.0);
    const Vec3 wb = origin - (a + length * u);
    n = solve_quadratic(dd, 2.0 * wb.dot(dir), wb.squaredNorm() - radius * radius, t);
    for (int i = 0; i < n; ++i) consider(t[i], wu + t[i] * du, length, inf);
  }
  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

double Patch::distance(const Vec3& p) const {
  const Vec3 w = p - a;
  const double s = w.dot(u);
  const double rho = (w - s * u).norm();
  if (kind == Kind::Cone) return segment_distance_2d(s, rho, s_lo, r_lo, s_hi, r_hi);

  double best = std::numeric_limits<double>::infinity();
  const double R = radius;
  const double c1 = std::max(0.0, s_lo);
  const double c2 = std::min(length, s_hi);
  if (c1 <= c2) best = std::min(best, segment_distance_2d(s, rho, c1, R, c2, R));
  const double a1 = std::max(-R, s_lo);
  const double a2 = std::min(0.0, s_hi);
  if (a1 <= a2) best = std::min(best, arc_distance(s, rho, 0.0, R, a1, a2));
  const double b1 = std::max(length, s_lo);
  const double b2 = std::min(length + R, s_hi);
  if (b1 <= b2) best = std::min(best, arc_distance(s, rho, length, R, b1, b2));
  return best;
}

Vec3 Patch::outward_normal(const Vec3& p) const {
  const Vec3 w = p - a;
  const double s = w.dot(u);
  Vec3 radial = w - s * u;
  const double rn = radial.norm();
  if (rn > 0.0) {
    radial /= rn;
  } else {
    radial = u.unitOrthogonal();
  }
  if (kind == Kind::Cone) {
    const double k = (r_hi - r_lo) / (s_hi - s_lo);
    return (radial - k * u).normalized();
  }
  const double sc = std::clamp(s, 0.0, length);
  const Vec3 d = p - (a + sc * u);
  const double dn = d.norm();
  return dn > 0.0 ? Vec3(d / dn) : radial;
}

}  // namespace layerseg

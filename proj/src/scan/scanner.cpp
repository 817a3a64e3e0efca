#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "layerseg/errors.hpp"
#include "layerseg/scan.hpp"

namespace layerseg {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kVisibilityEps = 1e-6;

Vec3 spherical(double azimuth, double elevation) {
  return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
          std::sin(elevation)};
}

std::uint64_t view_seed(std::uint64_t seed, int view) {
  return seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(view + 1) * 0xBF58476D1CE4E5B9ULL;
}

// Standard normal truncated to [-3, 3].
double truncated_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  for (;;) {
    const double z = n(rng);
    if (std::abs(z) <= 3.0) return z;
  }
}

}  // namespace

std::vector<Vec3> ScanConfig::resolved_views() const {
  if (!view_directions.empty()) return view_directions;
  std::vector<Vec3> out;
  if (num_views <= 0) return out;
  // One overhead camera, the rest split over the two rings.
  const int ring = num_views - 1;
  const int upper = (ring + 1) / 2;
  const int lower = ring - upper;
  for (int i = 0; i < upper; ++i) out.push_back(spherical(2.0 * std::numbers::pi * i / upper, 25.0 * kDeg));
  for (int i = 0; i < lower; ++i) {
    out.push_back(spherical(2.0 * std::numbers::pi * (i + 0.5) / lower, -10.0 * kDeg));
  }
  out.push_back(Vec3::UnitZ());
  return out;
}

void ScanConfig::validate() const {
  if (num_views < 1) throw InvalidArgument("scan config: num_views must be >= 1");
  if (!view_directions.empty() && view_directions.size() != static_cast<std::size_t>(num_views)) {
    throw InvalidArgument("scan config: view_directions does not match num_views");
  }
  if (rays_per_view < 1) throw InvalidArgument("scan config: rays_per_view must be >= 1");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("scan config: noise_sigma must be >= 0");
  if (!(camera_distance > 0.0)) throw InvalidArgument("scan config: camera_distance must be > 0");
  for (const auto& d : resolved_views()) {
    if (std::abs(d.norm() - 1.0) > 1e-6) throw InvalidArgument("scan config: view direction not unit");
    // Angle between the camera direction and straight down.
    if (-d.z() > std::cos(30.0 * kDeg)) {
      throw InvalidArgument("scan config: view within 30 degrees of looking up from below");
    }
  }
}

void LabeledScan::validate() const {
  cloud.validate();
  if (labels.size() != cloud.size()) throw InvalidArgument("scan: label count differs from points");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].valid()) throw InvalidArgument("scan: invalid label at point " + std::to_string(i));
  }
  if (cloud.has_views()) {
    for (int v : cloud.source_view) {
      if (v < 0 || static_cast<std::size_t>(v) >= view_origins.size()) {
        throw InvalidArgument("scan: source view out of range");
      }
    }
  }
}

LabeledScan LabeledScan::subset(std::span<const std::uint32_t> indices) const {
  LabeledScan out;
  out.cloud = cloud.subset(indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(labels.at(i));
  out.config = config;
  out.view_origins = view_origins;
  return out;
}

LabeledScan scan(const Scene& scene, const ScanConfig& config) {
  config.validate();
  if (scene.patches.empty()) throw EmptyScan("scan: scene has no surfaces");
  const Box box = scene.bounds();
  const Vec3 center = box.center();
  const double radius = 0.5 * (box.hi - box.lo).norm();
  const double dist = std::max(config.camera_distance, 1.05 * radius);
  const double half = radius / std::sqrt(dist * dist - radius * radius);
  // R2 low-discrepancy sequence: nested, so more rays only add samples.
  const double g = 1.32471795724474602596;
  const double a1 = 1.0 / g;
  const double a2 = 1.0 / (g * g);

  LabeledScan out;
  out.config = config;
  const auto views = config.resolved_views();
  for (int v = 0; v < static_cast<int>(views.size()); ++v) {
    const Vec3 origin = center + dist * views[v];
    out.view_origins.push_back(origin);
    const Vec3 forward = -views[v];
    const Vec3 ref = std::abs(forward.z()) > 0.99 ? Vec3::UnitY() : Vec3::UnitZ();
    const Vec3 right = forward.cross(ref).normalized();
    const Vec3 up = right.cross(forward);

    std::mt19937_64 rng(view_seed(config.seed, v));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u0 = unit(rng);
    const double v0 = unit(rng);
    for (int i = 0; i < config.rays_per_view; ++i) {
      double x = u0 + a1 * (i + 1);
      double y = v0 + a2 * (i + 1);
      x = 2.0 * (x - std::floor(x)) - 1.0;
      y = 2.0 * (y - std::floor(y)) - 1.0;
      const Vec3 dir = (forward + half * (x * right + y * up)).normalized();
      const auto hit = scene.cast(origin, dir);
      if (!hit) continue;
      const Patch& patch = scene.patches[hit->patch];
      Vec3 n = patch.outward_normal(hit->point);
      if (n.dot(dir) > 0.0) n = -n;
      const double t = hit->t + config.noise_sigma * truncated_normal(rng);
      out.cloud.positions.push_back(origin + t * dir);
      out.cloud.normals.push_back(n);
      out.cloud.source_view.push_back(v);
      out.labels.push_back(scene.label_on_patch(hit->patch, hit->point));
    }
  }
  if (out.cloud.size() == 0) throw EmptyScan("scan: no ray hit the scene");
  return out;
}

std::size_t check_visibility(const LabeledScan& s, const Scene& scene) {
  if (s.size() == 0) return 0;
  if (!s.cloud.has_views()) throw InvalidArgument("check_visibility: scan has no source views");
  const double slack = 3.0 * s.config.noise_sigma + kVisibilityEps;
  std::size_t violations = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec3& o = s.view_origins.at(static_cast<std::size_t>(s.cloud.source_view[i]));
    const Vec3 ray = s.cloud.positions[i] - o;
    const double d = ray.norm();
    if (scene.cast(o, ray / d, 1e-9, d - slack)) ++violations;
  }
  return violations;
}

LabeledScan resample(const LabeledScan& s, std::size_t target_points, std::uint64_t seed) {
  if (target_points == 0) throw InvalidArgument("resample: target_points must be >= 1");
  const std::size_t n = s.size();
  if (n == 0) throw InvalidArgument("resample: empty scan");
  if (target_points == n) return s;
  if (target_points < n) {
    const auto idx = farthest_point_sample(s.cloud, target_points, seed);
    return s.subset(idx);
  }
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
  for (std::size_t i = n; i < target_points; ++i) idx.push_back(pick(rng));
  LabeledScan out = s.subset(idx);
  const double sigma = s.config.noise_sigma;
  std::uniform_real_distribution<double> jit(-sigma, sigma);
  for (std::size_t i = n; i < target_points; ++i) {
    out.cloud.positions[i] += (sigma > 0.0 ? jit(rng) : 0.0) * out.cloud.normals[i];
  }
  return out;
}

}  // namespace layerseg

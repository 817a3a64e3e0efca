#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layerseg/geometry.hpp"
#include "layerseg/labels.hpp"
#include "layerseg/scene.hpp"

namespace layerseg {

/// Virtual scanner settings. `view_directions` point from the scene center to
/// each camera; when empty, `num_views` default directions are used.
struct ScanConfig {
  int num_views = 13;
  std::vector<Vec3> view_directions;
  int rays_per_view = 1200;
  double noise_sigma = 0.002;
  std::uint64_t seed = 0;
  double camera_distance = 3.0;

  /// Throws InvalidArgument on bad counts, negative noise or a camera within
  /// 30 degrees of looking straight up from below.
  void validate() const;

  /// Explicit directions, or the default layout: 12 cameras on two rings at
  /// +25 and -10 degrees elevation plus one overhead.
  std::vector<Vec3> resolved_views() const;
};

struct LabeledScan {
  PointCloud cloud;
  std::vector<CanonicalLabel> labels;
  ScanConfig config;
  std::vector<Vec3> view_origins;

  std::size_t size() const { return cloud.size(); }
  void validate() const;
  LabeledScan subset(std::span<const std::uint32_t> indices) const;
};

/// First-hit ray casting from every view with depth noise along the ray.
/// Labels come from the clean hit. Throws EmptyScan when nothing is hit.
LabeledScan scan(const Scene& scene, const ScanConfig& config);

/// Points whose acquisition ray meets a scene surface closer than
/// (distance - 3 sigma - 1e-6).
std::size_t check_visibility(const LabeledScan& scan, const Scene& scene);

/// Farthest point subset when shrinking; all points plus jittered duplicates
/// (displacement along the normal at most noise_sigma) when growing.
LabeledScan resample(const LabeledScan& scan, std::size_t target_points, std::uint64_t seed);

/// PLY with x y z nx ny nz (float) and int body, visible_class, hidden_class,
/// view. Comment lines carry the toolkit version, config hash, seed and view
/// origins.
void save_scan_ply(const std::string& path, const LabeledScan& scan, bool binary,
                   const std::vector<std::string>& extra_comments = {});
LabeledScan load_scan_ply(const std::string& path);

}  // namespace layerseg

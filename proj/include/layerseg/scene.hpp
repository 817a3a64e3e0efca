#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "layerseg/geometry.hpp"
#include "layerseg/labels.hpp"

namespace layerseg {

/// Segment a..b swept by a sphere of `radius`.
struct Capsule {
  std::string name;
  Vec3 a;
  Vec3 b;
  double radius = 0.0;
};

/// Analytic mannequin, z up, meters. Trunk and pelvis share one vertical axis
/// and radius so garment shells around them are concentric.
struct BodyModel {
  std::vector<Capsule> capsules;  // trunk, pelvis, head, arm_l, arm_r, leg_l, leg_r

  // Pose, radians: per side arm abduction and swing, leg splay and swing.
  double arm_abduction[2] = {0, 0};
  double arm_swing[2] = {0, 0};
  double leg_splay[2] = {0, 0};
  double leg_swing[2] = {0, 0};

  // Shape.
  double height_scale = 1.0;
  double trunk_radius_mult = 1.0;
  double arm_radius_mult = 1.0;
  double leg_radius_mult = 1.0;

  const Capsule& capsule(const std::string& name) const;
};

/// One garment. `coverage` is the sleeve fraction of arm length for upper
/// garments and the leg fraction (or skirt length in meters below the waist)
/// for lower garments.
struct GarmentShell {
  GarmentClass cls = GarmentClass::TShirt;
  double offset = 0.0;
  double coverage = 0.0;
};

/// Exactly one upper and one lower garment. Positive `overlap_band` means the
/// upper hem hangs that far below the lower waistband.
struct Outfit {
  GarmentShell upper;
  GarmentShell lower;
  double overlap_band = 0.0;
};

/// Everything needed to rebuild a scene. Stored on disk as `key = value` lines.
struct SceneSpec {
  GarmentClass upper = GarmentClass::TShirt;
  GarmentClass lower = GarmentClass::LongPants;
  double overlap_band_m = 0.08;
  std::uint64_t pose_seed = 0;
  std::uint64_t shape_seed = 0;

  bool operator==(const SceneSpec&) const = default;
};

std::string write_scene_spec(const SceneSpec& spec);
SceneSpec parse_scene_spec(const std::string& text);

/// Sampling ranges for pose and shape jitter. Angles in radians.
struct BodyRanges {
  double height_scale[2] = {0.9, 1.1};
  double radius_mult[2] = {0.9, 1.1};
  double arm_abduction[2] = {0.26, 0.61};
  double arm_swing[2] = {-0.26, 0.26};
  double leg_splay[2] = {0.035, 0.105};
  double leg_swing[2] = {-0.14, 0.14};
};

struct SynthConfig {
  BodyRanges ranges;
  double body_tight_threshold = 0.008;
  double min_clearance = 0.004;
  int max_retries = 50;
  double band_min = -0.2;
  double band_max = 0.12;
};

/// Surface piece of the scene. Capsule patches are the part of the offset
/// capsule around `a + s u, s in [0, length]` whose axial coordinate lies in
/// [s_lo, s_hi]; cone patches are frustums with radius r_lo at s_lo and r_hi at
/// s_hi. Owner -1 is the body, 0 the upper garment, 1 the lower garment.
struct Patch {
  enum class Kind { Capsule, Cone };
  Kind kind = Kind::Capsule;
  Vec3 a = Vec3::Zero();
  Vec3 u = Vec3::UnitZ();
  double length = 0.0;
  double radius = 0.0;
  double s_lo = 0.0;
  double s_hi = 0.0;
  double r_lo = 0.0;
  double r_hi = 0.0;
  int owner = -1;

  std::optional<double> intersect(const Vec3& origin, const Vec3& dir, double t_min,
                                  double t_max) const;
  double distance(const Vec3& p) const;
  Vec3 outward_normal(const Vec3& p) const;
};

struct RayHit {
  double t = 0.0;
  std::size_t patch = 0;
  Vec3 point = Vec3::Zero();
};

struct Scene {
  SceneSpec spec;
  BodyModel body;
  Outfit outfit;
  std::vector<Patch> patches;
  double body_tight_threshold = 0.008;
  int retries = 0;

  /// First surface hit along origin + t dir with t in (t_min, t_max).
  /// `skip_owner` excludes every patch with that owner (-2 skips nothing).
  std::optional<RayHit> cast(const Vec3& origin, const Vec3& dir, double t_min = 1e-9,
                             double t_max = 1e30, int skip_owner = -2) const;

  /// Distance to the union of body capsules, zero inside.
  double distance_to_body(const Vec3& p) const;

  /// Label of a point known to lie on `patch`.
  CanonicalLabel label_on_patch(std::size_t patch, const Vec3& p) const;

  std::optional<GarmentClass> owner_class(int owner) const;

  Box bounds() const;
};

/// Deterministic in (spec, config). Throws InvalidArgument when the spec is
/// invalid or no intersection-free pose is found within `max_retries`.
Scene sample_scene(const SceneSpec& spec, const SynthConfig& config = {});

/// Ground truth at a surface point: the nearest patch within `tolerance` decides
/// the visible layer; an inward probe decides the hidden one. Throws
/// OutOfDomain when no surface is that close.
CanonicalLabel surface_label(const Scene& scene, const Vec3& p, double tolerance);

}  // namespace layerseg

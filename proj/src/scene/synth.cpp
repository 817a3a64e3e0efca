#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "layerseg/errors.hpp"
#include "layerseg/scene.hpp"

namespace layerseg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kWaistOffset = 0.003;  // waistband sits close to the skin
constexpr double kHemTaper = 0.015;     // garment edges close onto what lies beneath
constexpr double kWaistTaper = 0.005;
constexpr double kProbeDepth = 0.05;

// Body proportions at height_scale 1, meters.
constexpr double kTrunkBottom = 0.85;
constexpr double kPelvisTop = 0.95;
constexpr double kTrunkTop = 1.38;
constexpr double kWaist = 0.15;  // above kTrunkBottom
constexpr double kShoulder = 1.36;
constexpr double kTrunkRadius = 0.15;
constexpr double kArmRadius = 0.045;
constexpr double kArmLength = 0.58;
constexpr double kLegRadius = 0.065;
constexpr double kLegLength = 0.82;
constexpr double kHeadRadius = 0.095;

double uniform(std::mt19937_64& rng, const double range[2]) {
  return std::uniform_real_distribution<double>(range[0], range[1])(rng);
}

double jitter(std::mt19937_64& rng, double centre, double half) {
  return std::uniform_real_distribution<double>(centre - half, centre + half)(rng);
}

Patch capsule_patch(const Vec3& a, const Vec3& b, double radius, double s_lo, double s_hi,
                    int owner) {
  Patch p;
  p.kind = Patch::Kind::Capsule;
  p.a = a;
  p.length = (b - a).norm();
  p.u = (b - a) / p.length;
  p.radius = radius;
  p.s_lo = s_lo;
  p.s_hi = s_hi;
  p.owner = owner;
  return p;
}

Patch cone_patch(const Vec3& a, const Vec3& u, double s_lo, double r_lo, double s_hi,
                 double r_hi, int owner) {
  Patch p;
  p.kind = Patch::Kind::Cone;
  p.a = a;
  p.u = u;
  p.s_lo = s_lo;
  p.s_hi = s_hi;
  p.r_lo = r_lo;
  p.r_hi = r_hi;
  p.owner = owner;
  return p;
}

// Sleeve or trouser leg: offset tube from the limb root down to `reach`, then a
// short taper back onto the skin.
void add_limb_cover(std::vector<Patch>& out, const Capsule& limb, double offset, double reach,
                    int owner) {
  const Vec3 u = (limb.b - limb.a).normalized();
  out.push_back(capsule_patch(limb.a, limb.b, limb.radius + offset, -kInf, reach - kHemTaper,
                              owner));
  out.push_back(cone_patch(limb.a, u, reach - kHemTaper, limb.radius + offset, reach,
                           limb.radius, owner));
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double h = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - a - h * ab).norm();
}

struct Shape {
  double h, mt, ma, ml;
};

BodyModel build_body(const Shape& shape, const double abd[2], const double aswing[2],
                     const double splay[2], const double lswing[2]) {
  BodyModel body;
  const double h = shape.h;
  const double R = kTrunkRadius * shape.mt;
  const double ra = kArmRadius * shape.ma;
  const double rl = kLegRadius * shape.ml;
  body.height_scale = h;
  body.trunk_radius_mult = shape.mt;
  body.arm_radius_mult = shape.ma;
  body.leg_radius_mult = shape.ml;
  for (int i = 0; i < 2; ++i) {
    body.arm_abduction[i] = abd[i];
    body.arm_swing[i] = aswing[i];
    body.leg_splay[i] = splay[i];
    body.leg_swing[i] = lswing[i];
  }
  body.capsules.push_back({"pelvis", {0, 0, kTrunkBottom * h}, {0, 0, kPelvisTop * h}, R});
  body.capsules.push_back({"torso", {0, 0, kPelvisTop * h}, {0, 0, kTrunkTop * h}, R});
  body.capsules.push_back({"head", {0, 0, 1.55 * h}, {0, 0, 1.62 * h}, kHeadRadius * h});
  const double hip = R - rl - 0.021;
  for (int i = 0; i < 2; ++i) {
    const double side = i == 0 ? 1.0 : -1.0;
    const Vec3 shoulder(side * (R + 0.5 * ra), 0.0, kShoulder * h);
    const Vec3 adir(side * std::sin(abd[i]) * std::cos(aswing[i]), std::sin(aswing[i]),
                    -std::cos(abd[i]) * std::cos(aswing[i]));
    body.capsules.push_back({i == 0 ? "arm_l" : "arm_r", shoulder,
                             shoulder + kArmLength * h * adir.normalized(), ra});
  }
  for (int i = 0; i < 2; ++i) {
    const double side = i == 0 ? 1.0 : -1.0;
    const Vec3 hipj(side * hip, 0.0, kTrunkBottom * h);
    const Vec3 ldir(side * std::sin(splay[i]) * std::cos(lswing[i]), std::sin(lswing[i]),
                    -std::cos(splay[i]) * std::cos(lswing[i]));
    body.capsules.push_back({i == 0 ? "leg_l" : "leg_r", hipj,
                             hipj + kLegLength * h * ldir.normalized(), rl});
  }
  return body;
}

struct GarmentParams {
  Outfit outfit;
  double skirt_slope = 0.25;
};

GarmentParams sample_garments(const SceneSpec& spec, std::mt19937_64& rng) {
  GarmentParams g;
  g.outfit.overlap_band = spec.overlap_band_m;
  g.outfit.upper.cls = spec.upper;
  g.outfit.lower.cls = spec.lower;
  switch (spec.upper) {
    case GarmentClass::TShirt:
      g.outfit.upper.offset = jitter(rng, 0.022, 0.002);
      g.outfit.upper.coverage = jitter(rng, 0.35, 0.05);
      break;
    case GarmentClass::LongShirt:
      g.outfit.upper.offset = jitter(rng, 0.016, 0.002);
      g.outfit.upper.coverage = jitter(rng, 0.92, 0.03);
      break;
    default:  // Top
      g.outfit.upper.offset = jitter(rng, 0.006, 0.0005);
      g.outfit.upper.coverage = 0.0;
      break;
  }
  switch (spec.lower) {
    case GarmentClass::LongPants:
      g.outfit.lower.offset = jitter(rng, 0.014, 0.002);
      g.outfit.lower.coverage = jitter(rng, 0.92, 0.03);
      break;
    case GarmentClass::Shorts:
      g.outfit.lower.offset = jitter(rng, 0.020, 0.002);
      g.outfit.lower.coverage = jitter(rng, 0.35, 0.05);
      break;
    default:  // Skirt: coverage is the length below the waist
      g.outfit.lower.offset = kWaistOffset;
      g.outfit.lower.coverage = jitter(rng, 0.40, 0.05);
      g.skirt_slope = jitter(rng, 0.25, 0.05);
      break;
  }
  return g;
}

std::vector<Patch> build_patches(const BodyModel& body, const GarmentParams& g) {
  std::vector<Patch> out;
  for (const auto& c : body.capsules) out.push_back(capsule_patch(c.a, c.b, c.radius, -kInf, kInf, -1));

  const double h = body.height_scale;
  const double R = body.capsule("torso").radius;
  const Vec3 ta(0, 0, kTrunkBottom * h);
  const Vec3 tb(0, 0, kTrunkTop * h);
  const Vec3 up = Vec3::UnitZ();
  const double L = (tb - ta).norm();
  const double s_waist = kWaist * h;
  const Outfit& o = g.outfit;

  // Lower garment: waistband shell, then legs or a skirt cone.
  const double rw = R + kWaistOffset;
  const bool skirt = o.lower.cls == GarmentClass::Skirt;
  out.push_back(capsule_patch(ta, tb, rw, skirt ? 0.0 : -kInf, s_waist - kWaistTaper, 1));
  out.push_back(cone_patch(ta, up, s_waist - kWaistTaper, rw, s_waist, R, 1));
  if (skirt) {
    const double depth = o.lower.coverage * h - s_waist;
    out.push_back(cone_patch(ta, up, -depth, rw + g.skirt_slope * depth, 0.0, rw, 1));
  } else {
    for (const char* leg : {"leg_l", "leg_r"}) {
      const Capsule& c = body.capsule(leg);
      add_limb_cover(out, c, o.lower.offset, o.lower.coverage * (c.b - c.a).norm(), 1);
    }
  }

  // Upper garment: trunk shell from the hem to the neckline, tapered onto the
  // waistband when it overlaps and onto the skin otherwise.
  const double ru = R + o.upper.offset;
  const double s_hem = s_waist - o.overlap_band;
  const double r_under = o.overlap_band > 0.0 ? rw : R;
  out.push_back(capsule_patch(ta, tb, ru, s_hem + kHemTaper, L + 0.6 * ru, 0));
  out.push_back(cone_patch(ta, up, s_hem, r_under, s_hem + kHemTaper, ru, 0));
  if (o.upper.coverage > 0.0) {
    for (const char* arm : {"arm_l", "arm_r"}) {
      const Capsule& c = body.capsule(arm);
      add_limb_cover(out, c, o.upper.offset, o.upper.coverage * (c.b - c.a).norm(), 0);
    }
  }
  return out;
}

// True when the pose keeps limbs clear of the trunk shells, of each other and
// of the skirt.
bool pose_is_clear(const BodyModel& body, const GarmentParams& g, double clearance) {
  const double h = body.height_scale;
  const double R = body.capsule("torso").radius;
  const Vec3 ta(0, 0, kTrunkBottom * h);
  const Vec3 tb(0, 0, kTrunkTop * h);
  const Outfit& o = g.outfit;
  const bool skirt = o.lower.cls == GarmentClass::Skirt;
  const double skirt_top = kTrunkBottom * h;
  const double skirt_depth = o.lower.coverage * h - kWaist * h;
  auto skirt_radius = [&](double z) {
    return R + kWaistOffset + g.skirt_slope * (skirt_top - z);
  };
  const int samples = 9;

  for (const char* arm : {"arm_l", "arm_r"}) {
    const Capsule& c = body.capsule(arm);
    for (int i = 0; i < samples; ++i) {
      const double f = 0.5 + 0.5 * i / (samples - 1);
      const Vec3 p = c.a + f * (c.b - c.a);
      const double sleeve = f <= o.upper.coverage ? o.upper.offset : 0.0;
      const double reach = c.radius + sleeve + clearance;
      if (segment_distance(p, ta, tb) < R + o.upper.offset + reach) return false;
      for (const char* leg : {"leg_l", "leg_r"}) {
        const Capsule& l = body.capsule(leg);
        if (segment_distance(p, l.a, l.b) < l.radius + o.lower.offset + reach) return false;
      }
      if (skirt && p.z() <= skirt_top && p.z() >= skirt_top - skirt_depth &&
          std::hypot(p.x(), p.y()) < skirt_radius(p.z()) + reach) {
        return false;
      }
    }
  }

  const Capsule& ll = body.capsule("leg_l");
  const Capsule& lr = body.capsule("leg_r");
  for (int i = 0; i < samples; ++i) {
    const double f = 0.5 + 0.5 * i / (samples - 1);
    const Vec3 p = ll.a + f * (ll.b - ll.a);
    if (segment_distance(p, lr.a, lr.b) < ll.radius + lr.radius + clearance) return false;
  }
  if (skirt) {
    for (const Capsule* l : {&ll, &lr}) {
      for (int i = 0; i <= 2 * samples; ++i) {
        const Vec3 p = l->a + (static_cast<double>(i) / (2 * samples)) * (l->b - l->a);
        if (p.z() > skirt_top || p.z() < skirt_top - skirt_depth) continue;
        if (std::hypot(p.x(), p.y()) + l->radius + clearance > skirt_radius(p.z())) return false;
      }
    }
  }
  return true;
}

}  // namespace

const Capsule& BodyModel::capsule(const std::string& name) const {
  for (const auto& c : capsules) {
    if (c.name == name) return c;
  }
  throw InvalidArgument("body has no capsule named " + name);
}

std::optional<RayHit> Scene::cast(const Vec3& origin, const Vec3& dir, double t_min,
                                  double t_max, int skip_owner) const {
  std::optional<RayHit> best;
  double limit = t_max;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].owner == skip_owner) continue;
    if (const auto t = patches[i].intersect(origin, dir, t_min, limit)) {
      limit = *t;
      best = RayHit{*t, i, origin + *t * dir};
    }
  }
  return best;
}

double Scene::distance_to_body(const Vec3& p) const {
  double best = kInf;
  for (const auto& c : body.capsules) {
    best = std::min(best, segment_distance(p, c.a, c.b) - c.radius);
  }
  return std::max(0.0, best);
}

std::optional<GarmentClass> Scene::owner_class(int owner) const {
  if (owner == 0) return outfit.upper.cls;
  if (owner == 1) return outfit.lower.cls;
  return std::nullopt;
}

CanonicalLabel Scene::label_on_patch(std::size_t patch, const Vec3& p) const {
  const Patch& pa = patches.at(patch);
  CanonicalLabel label;
  if (pa.owner < 0) return label;
  label.visible = owner_class(pa.owner);
  label.is_body = distance_to_body(p) <= body_tight_threshold;
  if (pa.owner == 0) {
    const Vec3 inward = -pa.outward_normal(p);
    const auto hit = cast(p, inward, 1e-9, kProbeDepth, pa.owner);
    if (hit && patches[hit->patch].owner == 1) label.hidden = outfit.lower.cls;
  }
  return label;
}

Box Scene::bounds() const {
  Box box{Vec3::Constant(kInf), Vec3::Constant(-kInf)};
  auto grow = [&](const Vec3& p, double r) {
    box.lo = box.lo.cwiseMin(p - Vec3::Constant(r));
    box.hi = box.hi.cwiseMax(p + Vec3::Constant(r));
  };
  for (const auto& p : patches) {
    if (p.kind == Patch::Kind::Cone) {
      grow(p.a + p.s_lo * p.u, p.r_lo);
      grow(p.a + p.s_hi * p.u, p.r_hi);
    } else {
      grow(p.a, p.radius);
      grow(p.a + p.length * p.u, p.radius);
    }
  }
  return box;
}

Scene sample_scene(const SceneSpec& spec, const SynthConfig& config) {
  if (!is_upper(spec.upper) || !is_lower(spec.lower)) {
    throw InvalidArgument("sample_scene: outfit needs one upper and one lower garment");
  }
  if (!(spec.overlap_band_m >= config.band_min && spec.overlap_band_m <= config.band_max)) {
    throw InvalidArgument("sample_scene: overlap_band_m outside [" +
                          std::to_string(config.band_min) + ", " +
                          std::to_string(config.band_max) + "]");
  }
  if (config.body_tight_threshold < 0.0) {
    throw InvalidArgument("sample_scene: negative body_tight_threshold");
  }

  std::mt19937_64 shape_rng(spec.shape_seed * 0x9E3779B97F4A7C15ULL + 0x51);
  const auto& rg = config.ranges;
  Shape shape{uniform(shape_rng, rg.height_scale), uniform(shape_rng, rg.radius_mult),
              uniform(shape_rng, rg.radius_mult), uniform(shape_rng, rg.radius_mult)};
  const GarmentParams garments = sample_garments(spec, shape_rng);
  if (spec.overlap_band_m > kWaist * shape.h - kHemTaper) {
    throw InvalidArgument("sample_scene: overlap band reaches below the pelvis");
  }

  std::mt19937_64 pose_rng(spec.pose_seed * 0xD1B54A32D192ED03ULL + 0x7F);
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    double abd[2], aswing[2], splay[2], lswing[2];
    for (int i = 0; i < 2; ++i) {
      abd[i] = uniform(pose_rng, rg.arm_abduction);
      aswing[i] = uniform(pose_rng, rg.arm_swing);
      splay[i] = uniform(pose_rng, rg.leg_splay);
      lswing[i] = uniform(pose_rng, rg.leg_swing);
    }
    BodyModel body = build_body(shape, abd, aswing, splay, lswing);
    if (!pose_is_clear(body, garments, config.min_clearance)) continue;
    Scene scene;
    scene.spec = spec;
    scene.outfit = garments.outfit;
    scene.patches = build_patches(body, garments);
    scene.body = std::move(body);
    scene.body_tight_threshold = config.body_tight_threshold;
    scene.retries = attempt;
    return scene;
  }
  throw InvalidArgument("sample_scene: no intersection-free pose after " +
                        std::to_string(config.max_retries) + " retries");
}

CanonicalLabel surface_label(const Scene& scene, const Vec3& p, double tolerance) {
  double best = kInf;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < scene.patches.size(); ++i) {
    const double d = scene.patches[i].distance(p);
    // Later patches (garments) win exact ties with the skin they rest on.
    if (d <= best) {
      best = d;
      arg = i;
    }
  }
  if (best > tolerance) {
    throw OutOfDomain("surface_label: point is " + std::to_string(best) +
                      " m from the nearest surface");
  }
  return scene.label_on_patch(arg, p);
}

}  // namespace layerseg

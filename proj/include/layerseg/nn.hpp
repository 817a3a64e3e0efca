#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "layerseg/autodiff.hpp"
#include "layerseg/geometry.hpp"
#include "layerseg/layering.hpp"

namespace layerseg::nn {

using ad::Mat;
using ad::Parameter;
using ad::Tape;
using ad::Var;

enum class Backbone : std::uint8_t { SetHierarchy, EdgeConv, PointTransformer };

std::string_view backbone_name(Backbone b);  // "set", "edge", "pt"
Backbone parse_backbone(std::string_view name);

struct HeadSpec {
  std::string name;
  std::size_t classes = 0;

  bool operator==(const HeadSpec&) const = default;
};

struct ModelConfig {
  Backbone backbone = Backbone::PointTransformer;
  std::size_t feature_width = 64;
  /// Downsampling levels (set) or edge-conv levels (edge). The transformer
  /// always uses one transition-down/up pair.
  std::size_t depth = 2;
  std::size_t k_neighbors = 16;
  /// Points gathered per ball in the set hierarchy.
  std::size_t ball_samples = 32;
  /// Scale for relative coordinates and the first ball-query radius, meters.
  double radius = 0.1;
  bool augment = false;
  std::vector<HeadSpec> heads;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

std::vector<HeadSpec> heads_for(Strategy s);
ModelConfig model_config_for(Strategy s, Backbone b);

/// Throws InvalidArgument unless the heads equal the strategy's layer tables.
void check_heads(const ModelConfig& cfg, Strategy s);

/// Network input: positions centered on their bounding box, features
/// [xyz, normal] per row.
template <typename T>
struct Input {
  std::vector<Vec3> positions;
  Mat<T> features;

  std::size_t size() const { return positions.size(); }
};

/// Centers the cloud, then applies p <- scale * R p + t (normals rotate only).
template <typename T>
Input<T> make_input(const PointCloud& cloud, const Mat3& rotation = Mat3::Identity(),
                    double scale = 1.0, const Vec3& translation = Vec3::Zero()) {
  if (cloud.size() == 0) throw InvalidArgument("make_input: empty cloud");
  if (cloud.normals.size() != cloud.size()) throw InvalidArgument("make_input: cloud needs normals");
  const Vec3 c = bounds(cloud.positions).center();
  Input<T> in;
  in.positions.resize(cloud.size());
  in.features.resize(static_cast<Eigen::Index>(cloud.size()), 6);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 p = scale * (rotation * (cloud.positions[i] - c)) + translation;
    const Vec3 n = (rotation * cloud.normals[i]).normalized();
    in.positions[i] = p;
    const auto r = static_cast<Eigen::Index>(i);
    for (int a = 0; a < 3; ++a) {
      in.features(r, a) = static_cast<T>(p[a]);
      in.features(r, 3 + a) = static_cast<T>(n[a]);
    }
  }
  return in;
}

namespace detail {

inline std::size_t coarse_size(std::size_t n) {
  return std::max<std::size_t>(std::min<std::size_t>(n, 4), n / 4);
}

inline std::vector<std::uint32_t> repeat_index(std::size_t m, std::size_t k) {
  std::vector<std::uint32_t> out(m * k);
  for (std::size_t i = 0; i < m * k; ++i) out[i] = static_cast<std::uint32_t>(i / k);
  return out;
}

inline std::vector<Vec3> pick(const std::vector<Vec3>& pts, std::span<const std::uint32_t> idx) {
  std::vector<Vec3> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(pts[i]);
  return out;
}

/// Row r: (pts[idx[r]] - centers[r / k]) / scale.
template <typename T>
Mat<T> relative(const std::vector<Vec3>& centers, const std::vector<Vec3>& pts,
                std::span<const std::uint32_t> idx, std::size_t k, double scale) {
  Mat<T> out(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Vec3 d = (pts[idx[r]] - centers[r / k]) / scale;
    for (int a = 0; a < 3; ++a) out(static_cast<Eigen::Index>(r), a) = static_cast<T>(d[a]);
  }
  return out;
}

/// Inverse-distance weighted average over the 3 nearest coarse points.
template <typename T>
Var<T> interpolate(Var<T> coarse, const std::vector<Vec3>& coarse_pos,
                   const std::vector<Vec3>& fine_pos) {
  const std::size_t k = std::min<std::size_t>(3, coarse_pos.size());
  const NeighborList nb = knn(std::span<const Vec3>(fine_pos), std::span<const Vec3>(coarse_pos), k);
  std::vector<T> w(nb.indices.size());
  for (std::size_t i = 0; i < nb.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += 1.0 / (nb.distances[i * k + j] + 1e-8);
    for (std::size_t j = 0; j < k; ++j) {
      w[i * k + j] = static_cast<T>(1.0 / (nb.distances[i * k + j] + 1e-8) / s);
    }
  }
  return ad::group_sum(ad::scale_rows(ad::gather_rows(coarse, nb.indices), std::move(w)), k);
}

}  // namespace detail

/// Backbone plus one MLP head per label layer. Parameters live in a flat
/// vector so models copy cleanly.
template <typename T>
class Model {
 public:
  Model() = default;

  Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t f = cfg_.feature_width;
    switch (cfg_.backbone) {
      case Backbone::SetHierarchy: {
        for (std::size_t l = 0; l < cfg_.depth; ++l) {
          const std::string p = "set.sa" + std::to_string(l);
          stages_.push_back({add(p + ".0", 3 + f, f, rng), add(p + ".1", f, f, rng)});
        }
        for (std::size_t l = cfg_.depth; l-- > 0;) {
          const std::string p = "set.fp" + std::to_string(l);
          std::vector<Lin> s{add(p + ".0", 2 * f, f, rng)};
          if (l == 0) s.push_back(add(p + ".1", f, f, rng));
          stages_.push_back(std::move(s));
        }
        stages_.push_back({add("set.embed", 6, f, rng)});
        break;
      }
      case Backbone::EdgeConv: {
        std::size_t in = 6;
        for (std::size_t l = 0; l < cfg_.depth; ++l) {
          const std::string p = "edge.ec" + std::to_string(l);
          stages_.push_back({add(p + ".0", 2 * in, f, rng), add(p + ".1", f, f, rng)});
          in = f;
        }
        stages_.push_back({add("edge.fuse", cfg_.depth * f, f, rng)});
        break;
      }
      case Backbone::PointTransformer: {
        stages_.push_back({add("pt.embed", 6, f, rng)});
        stages_.push_back({add("pt.down", 3 + f, f, rng)});
        stages_.push_back({add("pt.q", f, f, rng), add("pt.k", f, f, rng), add("pt.v", f, f, rng)});
        stages_.push_back({add("pt.pos.0", 3, f, rng), add("pt.pos.1", f, f, rng)});
        stages_.push_back({add("pt.attn.0", f, f, rng), add("pt.attn.1", f, f, rng)});
        stages_.push_back({add("pt.proj", f, f, rng)});
        stages_.push_back({add("pt.up.0", 2 * f, f, rng), add("pt.up.1", f, f, rng)});
        break;
      }
    }
    for (std::size_t h = 0; h < cfg_.heads.size(); ++h) {
      const std::string p = "head." + cfg_.heads[h].name;
      heads_.push_back({add(p + ".0", f, f, rng), add(p + ".1", f, cfg_.heads[h].classes, rng)});
    }
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  /// Per-point features, N x feature_width.
  Var<T> backbone(Tape<T>& tape, const Input<T>& in) {
    if (in.size() < cfg_.k_neighbors) {
      throw InvalidArgument("backbone: fewer points than k_neighbors");
    }
    if (in.features.rows() != static_cast<Eigen::Index>(in.size()) || in.features.cols() != 6) {
      throw InvalidArgument("backbone: input features must be N x 6");
    }
    switch (cfg_.backbone) {
      case Backbone::SetHierarchy: return set_forward(tape, in);
      case Backbone::EdgeConv: return edge_forward(tape, in);
      case Backbone::PointTransformer: return pt_forward(tape, in);
    }
    throw InvalidArgument("backbone: unknown kind");
  }

  /// One logit matrix per head.
  std::vector<Var<T>> heads(Tape<T>& tape, Var<T> features) {
    if (features.cols() != static_cast<Eigen::Index>(cfg_.feature_width)) {
      throw InvalidArgument("heads: feature width does not match the head input width");
    }
    std::vector<Var<T>> out;
    for (const auto& h : heads_) out.push_back(apply(tape, h[1], block(tape, h[0], features)));
    return out;
  }

  std::vector<Var<T>> forward(Tape<T>& tape, const Input<T>& in) {
    return heads(tape, backbone(tape, in));
  }

 private:
  struct Lin {
    std::size_t w = 0;
    std::size_t b = 0;
  };

  Lin add(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-a, a);
    Parameter<T> w{name + ".w", Mat<T>(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out)), {}};
    for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value.data()[i] = static_cast<T>(u(rng));
    std::uniform_real_distribution<double> ub(-0.1, 0.1);
    Parameter<T> b{name + ".b", Mat<T>(1, static_cast<Eigen::Index>(out)), {}};
    for (Eigen::Index i = 0; i < b.value.size(); ++i) b.value.data()[i] = static_cast<T>(ub(rng));
    params_.push_back(std::move(w));
    params_.push_back(std::move(b));
    return {params_.size() - 2, params_.size() - 1};
  }

  Var<T> apply(Tape<T>& t, const Lin& l, Var<T> x) {
    return ad::linear(x, t.param(params_[l.w]), std::optional(t.param(params_[l.b])));
  }

  // Linear -> layer norm -> ReLU.
  Var<T> block(Tape<T>& t, const Lin& l, Var<T> x) {
    return ad::relu(ad::layer_norm(apply(t, l, x)));
  }

  Var<T> set_forward(Tape<T>& t, const Input<T>& in) {
    const std::size_t k = cfg_.ball_samples;
    std::vector<std::vector<Vec3>> pos{in.positions};
    std::vector<Var<T>> feats{block(t, stages_[2 * cfg_.depth][0], t.constant(in.features))};
    double r = cfg_.radius;
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
      const auto& p = pos.back();
      const auto centers =
          farthest_point_sample_from(p, detail::coarse_size(p.size()), farthest_from_box_center(p));
      const BallGroups g = ball_query(centers, std::span<const Vec3>(p), r, k);
      auto cpos = detail::pick(p, centers);
      Var<T> x = ad::concat_cols<T>(
          {t.constant(detail::relative<T>(cpos, p, g.indices, k, r)), ad::gather_rows(feats.back(), g.indices)});
      x = block(t, stages_[l][0], x);
      x = block(t, stages_[l][1], x);
      feats.push_back(ad::group_max(x, k));
      pos.push_back(std::move(cpos));
      r *= 2.0;
    }
    Var<T> cur = feats.back();
    for (std::size_t l = cfg_.depth; l-- > 0;) {
      const auto& s = stages_[cfg_.depth + (cfg_.depth - 1 - l)];
      Var<T> x = ad::concat_cols<T>({detail::interpolate(cur, pos[l + 1], pos[l]), feats[l]});
      for (const auto& lin : s) x = block(t, lin, x);
      cur = x;
    }
    return cur;
  }

  Var<T> edge_forward(Tape<T>& t, const Input<T>& in) {
    const std::size_t n = in.size();
    const std::size_t k = cfg_.k_neighbors;
    Var<T> f = t.constant(in.features);
    std::vector<Var<T>> levels;
    const auto rep = detail::repeat_index(n, k);
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
      const Mat<T>& fv = f.value();
      const FeatureView<T> view{fv.data(), n, static_cast<std::size_t>(fv.cols())};
      const NeighborList nb = knn(view, view, k);
      for (auto j : nb.indices) t.note_branch(j);
      Var<T> fi = ad::gather_rows(f, rep);
      Var<T> fj = ad::gather_rows(f, nb.indices);
      Var<T> x = ad::concat_cols<T>({fi, ad::sub(fj, fi)});
      x = block(t, stages_[l][0], x);
      x = block(t, stages_[l][1], x);
      f = ad::group_max(x, k);
      levels.push_back(f);
    }
    return block(t, stages_[cfg_.depth][0], ad::concat_cols(levels));
  }

  Var<T> pt_forward(Tape<T>& t, const Input<T>& in) {
    const std::vector<Vec3>& p = in.positions;
    const double r = cfg_.radius;
    Var<T> f0 = block(t, stages_[0][0], t.constant(in.features));

    // Transition down: FPS centers pool their k spatial neighbors.
    const auto centers =
        farthest_point_sample_from(p, detail::coarse_size(p.size()), farthest_from_box_center(p));
    const auto cpos = detail::pick(p, centers);
    const std::size_t kd = cfg_.k_neighbors;
    const NeighborList down = knn(std::span<const Vec3>(cpos), std::span<const Vec3>(p), kd);
    Var<T> g = ad::concat_cols<T>(
        {t.constant(detail::relative<T>(cpos, p, down.indices, kd, r)), ad::gather_rows(f0, down.indices)});
    g = ad::group_max(block(t, stages_[1][0], g), kd);

    // Vector self-attention over k spatial neighbors of each center.
    const std::size_t m = cpos.size();
    const std::size_t ka = std::min(cfg_.k_neighbors, m);
    const NeighborList nb = knn(std::span<const Vec3>(cpos), std::span<const Vec3>(cpos), ka);
    const auto rep = detail::repeat_index(m, ka);
    Var<T> q = apply(t, stages_[2][0], g);
    Var<T> kf = apply(t, stages_[2][1], g);
    Var<T> v = apply(t, stages_[2][2], g);
    // Relative position p_i - p_j through a two-layer MLP.
    Var<T> rel = t.constant(detail::relative<T>(cpos, cpos, nb.indices, ka, -r));
    Var<T> delta = apply(t, stages_[3][1], ad::relu(apply(t, stages_[3][0], rel)));
    Var<T> a = ad::add(ad::sub(ad::gather_rows(q, rep), ad::gather_rows(kf, nb.indices)), delta);
    a = apply(t, stages_[4][1], ad::relu(apply(t, stages_[4][0], a)));
    Var<T> w = ad::group_softmax(a, ka);
    Var<T> y = ad::group_sum(ad::mul(w, ad::add(ad::gather_rows(v, nb.indices), delta)), ka);
    g = ad::relu(ad::layer_norm(ad::add(g, apply(t, stages_[5][0], y))));

    // Transition up back to every input point.
    Var<T> x = ad::concat_cols<T>({detail::interpolate(g, cpos, p), f0});
    x = block(t, stages_[6][0], x);
    return block(t, stages_[6][1], x);
  }

  ModelConfig cfg_;
  std::vector<Parameter<T>> params_;
  std::vector<std::vector<Lin>> stages_;
  std::vector<std::array<Lin, 2>> heads_;
};

/// Sum over layers of the (optionally class-weighted) mean cross-entropy.
template <typename T>
Var<T> multilayer_loss(const std::vector<Var<T>>& logits, const StrategyLabels& gt,
                       const std::vector<std::vector<T>>& class_weights = {}) {
  if (logits.empty() || logits.size() != gt.layers.size()) {
    throw InvalidArgument("multilayer_loss: layer count differs from ground truth");
  }
  if (!class_weights.empty() && class_weights.size() != logits.size()) {
    throw InvalidArgument("multilayer_loss: class weights need one vector per layer");
  }
  Var<T> total;
  for (std::size_t l = 0; l < logits.size(); ++l) {
    if (static_cast<std::size_t>(logits[l].cols()) != gt.class_counts.at(l)) {
      throw InvalidArgument("multilayer_loss: logit width differs from class count");
    }
    std::span<const T> w;
    if (!class_weights.empty()) w = class_weights[l];
    Var<T> ce = ad::cross_entropy(logits[l], std::span<const std::uint8_t>(gt.layers[l]), w);
    total = l == 0 ? ce : ad::add(total, ce);
  }
  return total;
}

/// Row-wise argmax; ties go to the lower class index.
template <typename T>
std::vector<std::uint8_t> argmax_rows(const Mat<T>& logits) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <typename T>
StrategyLabels labels_from_logits(const std::vector<Var<T>>& logits, Strategy s) {
  StrategyLabels out = StrategyLabels::empty(s, logits.empty() ? 0 : static_cast<std::size_t>(logits[0].rows()));
  if (logits.size() != out.layers.size()) throw InvalidArgument("predict: model heads do not match strategy");
  for (std::size_t l = 0; l < logits.size(); ++l) out.layers[l] = argmax_rows(logits[l].value());
  out.validate();
  return out;
}

template <typename T>
StrategyLabels predict(Model<T>& model, const Input<T>& in, Strategy s) {
  check_heads(model.config(), s);
  Tape<T> tape;
  return labels_from_logits(model.forward(tape, in), s);
}

template <typename T>
StrategyLabels predict(Model<T>& model, const PointCloud& cloud, Strategy s) {
  return predict(model, make_input<T>(cloud), s);
}

}  // namespace layerseg::nn

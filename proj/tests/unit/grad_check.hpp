#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <optional>
#include <span>
#include <string>

#include "layerseg/autodiff.hpp"
#include "layerseg/nn.hpp"

namespace layerseg::testing {

using MatD = ad::Mat<double>;

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

inline MatD random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

/// Builds a scalar from leaves holding `inputs`; returns the worst relative
/// error between tape gradients and central differences with step h.
inline double check_gradients(
    std::vector<MatD> inputs,
    const std::function<ad::Var<double>(ad::Tape<double>&, const std::vector<ad::Var<double>>&)>& f,
    double h = 1e-5) {
  auto eval = [&](const std::vector<MatD>& in, std::vector<MatD>* grads) {
    ad::Tape<double> tape;
    std::vector<ad::Var<double>> leaves;
    for (const auto& m : in) leaves.push_back(tape.leaf(m));
    const auto loss = f(tape, leaves);
    const double v = loss.value()(0, 0);
    if (grads) {
      tape.backward(loss);
      for (const auto& l : leaves) grads->push_back(tape.grad(l.id));
    }
    return v;
  };
  std::vector<MatD> analytic;
  eval(inputs, &analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index j = 0; j < inputs[i].size(); ++j) {
      const double x = inputs[i].data()[j];
      inputs[i].data()[j] = x + h;
      const double up = eval(inputs, nullptr);
      inputs[i].data()[j] = x - h;
      const double dn = eval(inputs, nullptr);
      inputs[i].data()[j] = x;
      worst = std::max(worst, rel_error(analytic[i].data()[j], (up - dn) / (2 * h)));
    }
  }
  return worst;
}

// ---- op suite ---------------------------------------------------------------

using Leaves = std::vector<ad::Var<double>>;

/// Projects a tensor onto a fixed random direction so every output entry
/// contributes to the scalar.
inline ad::Var<double> project(ad::Tape<double>& t, ad::Var<double> x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(x, t.constant(random_mat(rng, x.rows(), x.cols()))));
}

struct OpCase {
  std::string name;
  std::function<std::vector<MatD>(std::mt19937_64&)> inputs;
  std::function<ad::Var<double>(ad::Tape<double>&, const Leaves&, std::uint64_t)> loss;
};

inline const std::vector<OpCase>& op_cases() {
  using namespace ad;
  using V = Var<double>;
  static const std::vector<uint8_t> labels{0, 2, 1, 2, 2, 0};
  static const std::vector<double> weights{0.5, 2.0, 1.0};
  static const std::vector<OpCase> cases = {
      {"Linear",
       [](std::mt19937_64& r) { return std::vector<MatD>{random_mat(r, 5, 4), random_mat(r, 4, 3), random_mat(r, 1, 3)}; },
       [](Tape<double>& t, const Leaves& v, std::uint64_t s) {
         return project(t, linear(v[0], v[1], std::optional(v[2])), s);
       }},
      {"MatmulAndArithmetic",
       [](std::mt19937_64& r) { return std::vector<MatD>{random_mat(r, 4, 3), random_mat(r, 4, 3), random_mat(r, 3, 2)}; },
       [](Tape<double>& t, const Leaves& v, std::uint64_t s) {
         V x = add(mul(v[0], v[1]), sub(scale(v[0], 0.7), v[1]));
         return add(project(t, matmul(x, v[2]), s), mean(mul(x, x)));
       }},
      {"Relu",
       [](std::mt19937_64& r) { return std::vector<MatD>{random_mat(r, 6, 5)}; },
       [](Tape<double>& t, const Leaves& v, std::uint64_t s) { return project(t, relu(v[0]), s); }},
      {"ConcatAndGather",
       [](std::mt19937_64& r) { return std::vector<MatD>{random_mat(r, 4, 2), random_mat(r, 4, 3)}; },
       [](Tape<double>& t, const Leaves& v, std::uint64_t s) {
         V c = concat_cols<double>({v[0], v[1], v[0]});
         return project(t, gather_rows(c, {3, 0, 0, 2, 3, 1, 3}), s);
       }},
      {"GroupReductions",
       [](std::mt19937_64& r) { return std::vector<MatD>{random_mat(r, 12, 3)}; },
       [](Tape<double>& t, const Leaves& v, std::uint64_t s) {
         return add(add(project(t, group_max(v[0], 4), s), project(t, group_sum(v[0], 3), s + 1)),
                    project(t, group_softmax(v[0], 4), s + 2));
       }},
      {"ScaleRowsAndLayerNorm",
       [](std::mt19937_64& r) { return std::vector<MatD>{random_mat(r, 5, 6)}; },
       [](Tape<double>& t, const Leaves& v, std::uint64_t s) {
         V x = scale_rows(v[0], std::vector<double>{0.5, -1.0, 2.0, 0.1, 1.3});
         return project(t, layer_norm(x), s);
       }},
      {"CrossEntropy",
       [](std::mt19937_64& r) { return std::vector<MatD>{random_mat(r, 6, 3, 2.0)}; },
       [](Tape<double>&, const Leaves& v, std::uint64_t) {
         return add(cross_entropy(v[0], std::span<const std::uint8_t>(labels)),
                    cross_entropy(v[0], std::span<const std::uint8_t>(labels), std::span<const double>(weights)));
       }},
  };
  return cases;
}

inline double op_case_error(const OpCase& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 13);
  return check_gradients(c.inputs(rng), [&](ad::Tape<double>& t, const Leaves& v) { return c.loss(t, v, seed); });
}

// ---- model probes -----------------------------------------------------------

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  std::normal_distribution<double> g;
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.positions.emplace_back(u(rng), u(rng), 2.0 * u(rng));
    c.normals.push_back(Vec3(g(rng), g(rng), g(rng)).normalized());
  }
  return c;
}

inline StrategyLabels random_labels(Strategy s, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  StrategyLabels l = StrategyLabels::empty(s, n);
  for (std::size_t j = 0; j < l.layers.size(); ++j) {
    std::uniform_int_distribution<int> c(0, static_cast<int>(l.class_counts[j]) - 1);
    for (auto& v : l.layers[j]) v = static_cast<std::uint8_t>(c(rng));
  }
  return l;
}

inline nn::ModelConfig small_config(nn::Backbone b, Strategy s = Strategy::S2) {
  nn::ModelConfig c = nn::model_config_for(s, b);
  c.feature_width = 8;
  c.k_neighbors = 6;
  c.radius = 0.3;
  return c;
}

struct ProbeResult {
  double worst = 0.0;
  int checked = 0;
  int redrawn = 0;
  int directions = 0;
  /// Most probes must be usable, otherwise the check proves little.
  bool conclusive() const { return checked >= 3 * redrawn && directions >= 1; }
};

/// Worst relative error over a sample of parameter entries plus unit random
/// directions through all parameters. A probe whose +h or -h evaluation lands
/// on a different ReLU/max/neighbor branch than the base point straddles a
/// kink, where central differences are meaningless; it is redrawn.
template <typename LossFn>
ProbeResult model_gradient_error(nn::Model<double>& model, LossFn loss_of, std::uint64_t seed) {
  auto& params = model.parameters();
  auto eval = [&](std::uint64_t* branch) {
    ad::Tape<double> t;
    t.record_branches = true;
    const double v = loss_of(t).value()(0, 0);
    *branch = t.branch_hash;
    return v;
  };
  for (auto& p : params) p.zero_grad();
  std::uint64_t base = 0;
  {
    ad::Tape<double> t;
    t.record_branches = true;
    t.backward(loss_of(t));
    base = t.branch_hash;
  }
  std::vector<MatD> g;
  for (auto& p : params) g.push_back(p.grad);

  const double h = 1e-5;
  std::mt19937_64 rng(seed);
  ProbeResult res;
  auto probe = [&](auto&& apply, double analytic) {
    std::uint64_t bu = 0, bd = 0;
    apply(h);
    const double up = eval(&bu);
    apply(-2 * h);
    const double dn = eval(&bd);
    apply(h);
    if (bu != base || bd != base) {
      ++res.redrawn;
      return false;
    }
    res.worst = std::max(res.worst, rel_error(analytic, (up - dn) / (2 * h)));
    ++res.checked;
    return true;
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = params[i].value;
    std::uniform_int_distribution<Eigen::Index> pick(0, v.size() - 1);
    int ok = 0;
    for (int attempt = 0; attempt < 12 && ok < 3; ++attempt) {
      const Eigen::Index j = pick(rng);
      ok += probe([&](double d) { v.data()[j] += d; }, g[i].data()[j]);
    }
  }
  for (int attempt = 0; attempt < 12 && res.directions < 2; ++attempt) {
    std::vector<MatD> dir;
    double norm2 = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      dir.push_back(random_mat(rng, params[i].value.rows(), params[i].value.cols()));
      norm2 += dir[i].squaredNorm();
    }
    double analytic = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      dir[i] /= std::sqrt(norm2);
      analytic += dir[i].cwiseProduct(g[i]).sum();
    }
    res.directions += probe([&](double d) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i].value += d * dir[i];
    }, analytic);
  }
  return res;
}

/// Backbone mean feature and weighted S5 loss for one backbone and seed.
inline ProbeResult backbone_probe(nn::Backbone b, int s) {
  nn::Model<double> m(small_config(b), 50 + s);
  const auto in = nn::make_input<double>(random_cloud(48, 70 + s));
  ProbeResult r = model_gradient_error(m, [&](ad::Tape<double>& t) { return ad::mean(m.backbone(t, in)); }, s);
  return r;
}

inline ProbeResult end_to_end_probe(nn::Backbone b, int s) {
  nn::Model<double> m(small_config(b, Strategy::S5), 10 + s);
  const auto in = nn::make_input<double>(random_cloud(48, 30 + s));
  const auto gt = random_labels(Strategy::S5, 48, s);
  const std::vector<std::vector<double>> w{{1.0, 0.5}, {1, 2, 1, 1, 0.5, 1, 3}, {1, 1, 2, 0.7}};
  return model_gradient_error(
      m, [&](ad::Tape<double>& t) { return nn::multilayer_loss(m.forward(t, in), gt, w); }, 100 + s);
}

}  // namespace layerseg::testing

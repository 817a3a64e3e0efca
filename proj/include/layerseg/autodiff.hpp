#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layerseg/errors.hpp"

namespace layerseg::ad {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Trainable tensor that outlives a tape.
template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Mat<T>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep visits every node after all of its consumers.
template <typename T>
class Tape {
 public:
  using M = Mat<T>;
  using Backward = std::function<void(Tape&, const M& grad)>;

  Var<T> constant(M value) { return push(std::move(value), false, nullptr); }

  /// Leaf whose gradient is read back with `grad()`.
  Var<T> leaf(M value) { return push(std::move(value), true, nullptr); }

  /// Leaf bound to a parameter; backward accumulates into `p.grad`.
  Var<T> param(Parameter<T>& p) {
    Node n;
    n.ext = &p;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<T> push(M value, bool needs_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const M& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.ext ? n.ext->value : n.value;
  }

  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  /// Gradient buffer of a node, zero-initialised on first use.
  M& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) {
      const M& v = value(id);
      n.grad.setZero(v.rows(), v.cols());
    }
    return n.grad;
  }

  void backward(Var<T> loss) {
    const M& v = value(loss.id);
    if (v.rows() != 1 || v.cols() != 1) {
      throw InvalidArgument("backward: loss must be a scalar");
    }
    grad(loss.id)(0, 0) += T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.ext) {
        if (n.ext->grad.size() == 0) n.ext->zero_grad();
        n.ext->grad += n.grad;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

  /// When enabled, piecewise ops fold their active branch (ReLU masks, max
  /// arguments, neighbor picks) into `branch_hash`. Two evaluations with equal
  /// hashes lie on the same smooth piece.
  bool record_branches = false;
  std::uint64_t branch_hash = 0xcbf29ce484222325ULL;

  void note_branch(std::uint64_t v) {
    if (record_branches) branch_hash = (branch_hash ^ v) * 0x100000001b3ULL;
  }

 private:
  struct Node {
    M value;
    M grad;
    Parameter<T>* ext = nullptr;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

namespace detail {

template <typename T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch");
  }
}

template <typename T>
bool any_grad(std::initializer_list<Var<T>> vs) {
  return std::any_of(vs.begin(), vs.end(), [](const Var<T>& v) { return v.tape->needs_grad(v.id); });
}

}  // namespace detail

/// x W + b with b a 1 x out row (pass an invalid Var to skip the bias).
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b = std::nullopt) {
  if (x.cols() != w.rows()) throw InvalidArgument("linear: width mismatch");
  Tape<T>& t = *x.tape;
  Mat<T> out = x.value() * w.value();
  if (b) {
    if (b->rows() != 1 || b->cols() != w.cols()) throw InvalidArgument("linear: bias shape");
    out.rowwise() += b->value().row(0);
  }
  const bool ng = detail::any_grad({x, w}) || (b && t.needs_grad(b->id));
  const int xi = x.id, wi = w.id, bi = b ? b->id : -1;
  return t.push(std::move(out), ng, [xi, wi, bi](Tape<T>& tp, const Mat<T>& g) {
    if (tp.needs_grad(xi)) tp.grad(xi).noalias() += g * tp.value(wi).transpose();
    if (tp.needs_grad(wi)) tp.grad(wi).noalias() += tp.value(xi).transpose() * g;
    if (bi >= 0 && tp.needs_grad(bi)) tp.grad(bi) += g.colwise().sum();
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  return linear(a, b);
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::check_same(a, b, "add");
  const int ai = a.id, bi = b.id;
  return a.tape->push(a.value() + b.value(), detail::any_grad({a, b}),
                      [ai, bi](Tape<T>& tp, const Mat<T>& g) {
                        if (tp.needs_grad(ai)) tp.grad(ai) += g;
                        if (tp.needs_grad(bi)) tp.grad(bi) += g;
                      });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::check_same(a, b, "sub");
  const int ai = a.id, bi = b.id;
  return a.tape->push(a.value() - b.value(), detail::any_grad({a, b}),
                      [ai, bi](Tape<T>& tp, const Mat<T>& g) {
                        if (tp.needs_grad(ai)) tp.grad(ai) += g;
                        if (tp.needs_grad(bi)) tp.grad(bi) -= g;
                      });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::check_same(a, b, "mul");
  const int ai = a.id, bi = b.id;
  return a.tape->push(a.value().cwiseProduct(b.value()), detail::any_grad({a, b}),
                      [ai, bi](Tape<T>& tp, const Mat<T>& g) {
                        if (tp.needs_grad(ai)) tp.grad(ai) += g.cwiseProduct(tp.value(bi));
                        if (tp.needs_grad(bi)) tp.grad(bi) += g.cwiseProduct(tp.value(ai));
                      });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  const int ai = a.id;
  return a.tape->push(a.value() * c, detail::any_grad({a}),
                      [ai, c](Tape<T>& tp, const Mat<T>& g) { tp.grad(ai) += g * c; });
}

template <typename T>
Var<T> relu(Var<T> a) {
  if (a.tape->record_branches) {
    const Mat<T>& v = a.value();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.tape->note_branch(v.data()[i] > T(0));
  }
  const int ai = a.id;
  return a.tape->push(a.value().cwiseMax(T(0)), detail::any_grad({a}),
                      [ai](Tape<T>& tp, const Mat<T>& g) {
                        tp.grad(ai) += (tp.value(ai).array() > T(0)).select(g, T(0));
                      });
}

/// Column-wise concatenation of equally tall inputs.
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool ng = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw InvalidArgument("concat_cols: row mismatch");
    cols += p.cols();
    ng = ng || p.tape->needs_grad(p.id);
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  Mat<T> out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts[0].tape->push(std::move(out), ng, [ids, widths](Tape<T>& tp, const Mat<T>& g) {
    Eigen::Index c0 = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (tp.needs_grad(ids[i])) tp.grad(ids[i]) += g.middleCols(c0, widths[i]);
      c0 += widths[i];
    }
  });
}

/// out[r] = a[idx[r]]; backward scatters.
template <typename T>
Var<T> gather_rows(Var<T> a, std::vector<std::uint32_t> idx) {
  const Mat<T>& av = a.value();
  Mat<T> out(static_cast<Eigen::Index>(idx.size()), av.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= av.rows()) throw InvalidArgument("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = av.row(idx[r]);
  }
  const int ai = a.id;
  return a.tape->push(std::move(out), detail::any_grad({a}),
                      [ai, idx = std::move(idx)](Tape<T>& tp, const Mat<T>& g) {
                        Mat<T>& ga = tp.grad(ai);
                        for (std::size_t r = 0; r < idx.size(); ++r) {
                          ga.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
                        }
                      });
}

/// Rows come in groups of k; returns the per-group, per-column maximum. Ties
/// go to the earliest row of the group.
template <typename T>
Var<T> group_max(Var<T> a, std::size_t k) {
  const Mat<T>& av = a.value();
  if (k == 0 || av.rows() % static_cast<Eigen::Index>(k) != 0) {
    throw InvalidArgument("group_max: rows not divisible by group size");
  }
  const Eigen::Index m = av.rows() / static_cast<Eigen::Index>(k);
  const Eigen::Index c = av.cols();
  Mat<T> out(m, c);
  std::vector<std::uint32_t> arg(static_cast<std::size_t>(m * c));
  for (Eigen::Index g = 0; g < m; ++g) {
    const Eigen::Index base = g * static_cast<Eigen::Index>(k);
    for (Eigen::Index j = 0; j < c; ++j) {
      Eigen::Index best = base;
      for (Eigen::Index r = base + 1; r < base + static_cast<Eigen::Index>(k); ++r) {
        if (av(r, j) > av(best, j)) best = r;
      }
      out(g, j) = av(best, j);
      a.tape->note_branch(static_cast<std::uint64_t>(best));
      arg[static_cast<std::size_t>(g * c + j)] = static_cast<std::uint32_t>(best);
    }
  }
  const int ai = a.id;
  return a.tape->push(std::move(out), detail::any_grad({a}),
                      [ai, arg = std::move(arg), c](Tape<T>& tp, const Mat<T>& g) {
                        Mat<T>& ga = tp.grad(ai);
                        for (Eigen::Index r = 0; r < g.rows(); ++r) {
                          for (Eigen::Index j = 0; j < c; ++j) {
                            ga(arg[static_cast<std::size_t>(r * c + j)], j) += g(r, j);
                          }
                        }
                      });
}

template <typename T>
Var<T> group_sum(Var<T> a, std::size_t k) {
  const Mat<T>& av = a.value();
  const auto kk = static_cast<Eigen::Index>(k);
  if (k == 0 || av.rows() % kk != 0) throw InvalidArgument("group_sum: rows not divisible");
  const Eigen::Index m = av.rows() / kk;
  Mat<T> out = Mat<T>::Zero(m, av.cols());
  for (Eigen::Index g = 0; g < m; ++g) {
    for (Eigen::Index r = 0; r < kk; ++r) out.row(g) += av.row(g * kk + r);
  }
  const int ai = a.id;
  return a.tape->push(std::move(out), detail::any_grad({a}),
                      [ai, kk](Tape<T>& tp, const Mat<T>& g) {
                        Mat<T>& ga = tp.grad(ai);
                        for (Eigen::Index gr = 0; gr < g.rows(); ++gr) {
                          for (Eigen::Index r = 0; r < kk; ++r) ga.row(gr * kk + r) += g.row(gr);
                        }
                      });
}

/// Softmax over the k rows of each group, independently per column.
template <typename T>
Var<T> group_softmax(Var<T> a, std::size_t k) {
  const Mat<T>& av = a.value();
  const auto kk = static_cast<Eigen::Index>(k);
  if (k == 0 || av.rows() % kk != 0) throw InvalidArgument("group_softmax: rows not divisible");
  const Eigen::Index m = av.rows() / kk;
  Mat<T> out(av.rows(), av.cols());
  for (Eigen::Index g = 0; g < m; ++g) {
    auto blk = av.middleRows(g * kk, kk);
    auto o = out.middleRows(g * kk, kk);
    const auto mx = blk.colwise().maxCoeff().eval();
    o = (blk.rowwise() - mx).array().exp().matrix();
    const auto s = o.colwise().sum().eval();
    o.array().rowwise() /= s.array();
  }
  const int ai = a.id;
  const int self = static_cast<int>(a.tape->size());
  return a.tape->push(std::move(out), detail::any_grad({a}),
                      [ai, kk, self](Tape<T>& tp, const Mat<T>& g) {
                        const Mat<T>& y = tp.value(self);
                        Mat<T>& ga = tp.grad(ai);
                        for (Eigen::Index gr = 0; gr < y.rows() / kk; ++gr) {
                          auto yb = y.middleRows(gr * kk, kk);
                          auto gb = g.middleRows(gr * kk, kk);
                          const auto dot = yb.cwiseProduct(gb).colwise().sum().eval();
                          ga.middleRows(gr * kk, kk) +=
                              yb.cwiseProduct((gb.rowwise() - dot)).eval();
                        }
                      });
}

/// out[r] = w[r] * a[r] with constant weights.
template <typename T>
Var<T> scale_rows(Var<T> a, std::vector<T> w) {
  if (static_cast<Eigen::Index>(w.size()) != a.rows()) throw InvalidArgument("scale_rows: size");
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> wv(w.data(),
                                                                static_cast<Eigen::Index>(w.size()));
  Mat<T> out = wv.asDiagonal() * a.value();
  const int ai = a.id;
  return a.tape->push(std::move(out), detail::any_grad({a}),
                      [ai, w = std::move(w)](Tape<T>& tp, const Mat<T>& g) {
                        const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> wm(
                            w.data(), static_cast<Eigen::Index>(w.size()));
                        tp.grad(ai) += wm.asDiagonal() * g;
                      });
}

/// Per-row normalisation to zero mean and unit variance (no affine part).
template <typename T>
Var<T> layer_norm(Var<T> a, T eps = T(1e-5)) {
  const Mat<T>& av = a.value();
  const Eigen::Index c = av.cols();
  Mat<T> out(av.rows(), c);
  std::vector<T> inv(static_cast<std::size_t>(av.rows()));
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    const T mu = av.row(r).mean();
    const T var = (av.row(r).array() - mu).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    inv[static_cast<std::size_t>(r)] = is;
    out.row(r) = (av.row(r).array() - mu) * is;
  }
  const int ai = a.id;
  const int self = static_cast<int>(a.tape->size());
  return a.tape->push(std::move(out), detail::any_grad({a}),
                      [ai, self, inv = std::move(inv), c](Tape<T>& tp, const Mat<T>& g) {
                        const Mat<T>& y = tp.value(self);
                        Mat<T>& ga = tp.grad(ai);
                        for (Eigen::Index r = 0; r < g.rows(); ++r) {
                          const T mg = g.row(r).mean();
                          const T mgy = g.row(r).dot(y.row(r)) / static_cast<T>(c);
                          ga.row(r).array() += inv[static_cast<std::size_t>(r)] *
                                               (g.row(r).array() - mg - y.row(r).array() * mgy);
                        }
                      });
}

template <typename T>
Var<T> sum(Var<T> a) {
  Mat<T> out(1, 1);
  out(0, 0) = a.value().sum();
  const int ai = a.id;
  return a.tape->push(std::move(out), detail::any_grad({a}),
                      [ai](Tape<T>& tp, const Mat<T>& g) { tp.grad(ai).array() += g(0, 0); });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

/// Weighted mean cross-entropy: sum_i w[y_i] (logsumexp(z_i) - z_i[y_i]) /
/// sum_i w[y_i]. Empty `class_weights` means all ones.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::uint8_t> labels,
                     std::span<const T> class_weights = {}) {
  const Mat<T>& z = logits.value();
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) {
    throw InvalidArgument("cross_entropy: label count differs from rows");
  }
  if (!class_weights.empty() && static_cast<Eigen::Index>(class_weights.size()) != z.cols()) {
    throw InvalidArgument("cross_entropy: class weight count differs from classes");
  }
  const Eigen::Index n = z.rows();
  Mat<T> prob(n, z.cols());
  std::vector<T> w(static_cast<std::size_t>(n));
  T total = 0;
  T loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::uint8_t y = labels[static_cast<std::size_t>(i)];
    if (y >= z.cols()) throw InvalidArgument("cross_entropy: label out of range");
    const T mx = z.row(i).maxCoeff();
    prob.row(i) = (z.row(i).array() - mx).exp().matrix();
    const T s = prob.row(i).sum();
    prob.row(i) /= s;
    const T wi = class_weights.empty() ? T(1) : class_weights[y];
    w[static_cast<std::size_t>(i)] = wi;
    total += wi;
    loss += wi * (std::log(s) + mx - z(i, y));
  }
  if (!(total > T(0))) throw InvalidArgument("cross_entropy: total weight is zero");
  Mat<T> out(1, 1);
  out(0, 0) = loss / total;
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  const int li = logits.id;
  return logits.tape->push(
      std::move(out), detail::any_grad({logits}),
      [li, prob = std::move(prob), w = std::move(w), lab = std::move(lab), total](
          Tape<T>& tp, const Mat<T>& g) {
        Mat<T>& gz = tp.grad(li);
        const T s = g(0, 0) / total;
        for (Eigen::Index i = 0; i < prob.rows(); ++i) {
          const T f = s * w[static_cast<std::size_t>(i)];
          gz.row(i) += f * prob.row(i);
          gz(i, lab[static_cast<std::size_t>(i)]) -= f;
        }
      });
}

}  // namespace layerseg::ad

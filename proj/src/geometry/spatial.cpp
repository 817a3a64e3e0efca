#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <utility>

#include <Eigen/Geometry>

#include "layerseg/geometry.hpp"

namespace layerseg {
namespace {

// Compressed uniform grid: points bucketed by cell, cells stored densely.
class UniformGrid {
 public:
  UniformGrid(std::span<const Vec3> points, double cell) : points_(points) {
    const Box box = bounds(points);
    origin_ = box.lo;
    cell_ = cell;
    const Vec3 extent = box.hi - box.lo;
    // Keep the dense cell array proportional to the point count.
    const double budget = 8.0 * static_cast<double>(points.size()) + 64.0;
    for (;;) {
      for (int a = 0; a < 3; ++a) {
        dims_[a] = std::max(1, static_cast<int>(std::floor(extent[a] / cell_)) + 1);
      }
      if (static_cast<double>(dims_[0]) * dims_[1] * dims_[2] <= budget) break;
      cell_ *= 1.5;
    }
    const std::size_t ncell = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    start_.assign(ncell + 1, 0);
    std::vector<std::size_t> cell_of(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      cell_of[i] = flat(cell_coords(points[i]));
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < ncell; ++c) start_[c + 1] += start_[c];
    items_.resize(points.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    // Ascending insertion keeps each bucket sorted by index.
    for (std::size_t i = 0; i < points.size(); ++i) {
      items_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
    }
  }

  std::array<int, 3> cell_coords(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a) {
      const int v = static_cast<int>(std::floor((p[a] - origin_[a]) / cell_));
      c[a] = std::clamp(v, 0, dims_[a] - 1);
    }
    return c;
  }

  std::size_t flat(const std::array<int, 3>& c) const {
    return (static_cast<std::size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
  }

  int max_dim() const { return std::max({dims_[0], dims_[1], dims_[2]}); }
  double cell() const { return cell_; }

  // Visits every point in cells at Chebyshev ring distance exactly r.
  template <typename F>
  void visit_ring(const std::array<int, 3>& c, int r, F&& f) const {
    for (int dz = -r; dz <= r; ++dz) {
      const int z = c[2] + dz;
      if (z < 0 || z >= dims_[2]) continue;
      for (int dy = -r; dy <= r; ++dy) {
        const int y = c[1] + dy;
        if (y < 0 || y >= dims_[1]) continue;
        const bool face = std::abs(dz) == r || std::abs(dy) == r;
        const int step = face ? 1 : 2 * r;
        for (int dx = -r; dx <= r; dx += (step == 0 ? 1 : step)) {
          const int x = c[0] + dx;
          if (x >= 0 && x < dims_[0]) {
            const std::size_t id = flat({x, y, z});
            for (std::size_t it = start_[id]; it < start_[id + 1]; ++it) f(items_[it]);
          }
          if (r == 0) break;
        }
      }
    }
  }

 private:
  std::span<const Vec3> points_;
  Vec3 origin_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::uint32_t> items_;
};

double median_nearest_distance(std::span<const Vec3> pts) {
  const std::size_t n = pts.size();
  if (n < 2) return 1.0;
  const std::size_t samples = std::min<std::size_t>(64, n);
  std::vector<double> d;
  d.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t i = s * n / samples;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      best = std::min(best, (pts[i] - pts[j]).squaredNorm());
    }
    d.push_back(std::sqrt(best));
  }
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

using Candidate = std::pair<double, std::uint32_t>;

}  // namespace

NeighborList knn(std::span<const Vec3> query, std::span<const Vec3> reference,
                 std::size_t k) {
  if (k == 0 || k > reference.size()) {
    throw InvalidArgument("knn: k must be in [1, reference size]");
  }
  NeighborList out;
  out.rows = query.size();
  out.k = k;
  out.indices.resize(query.size() * k);
  out.distances.resize(query.size() * k);

  double cell = median_nearest_distance(reference) * std::max(1.0, std::sqrt(double(k)));
  if (!(cell > 0.0)) {
    const Box b = bounds(reference);
    cell = std::max((b.hi - b.lo).norm() / std::cbrt(double(reference.size())), 1e-9);
  }
  const UniformGrid grid(reference, cell);

  // Max-heap on (squared distance, index): top is the current worst candidate.
  std::priority_queue<Candidate> heap;
  std::vector<Candidate> sorted;
  for (std::size_t qi = 0; qi < query.size(); ++qi) {
    const Vec3& q = query[qi];
    const auto c = grid.cell_coords(q);
    heap = {};
    for (int r = 0;; ++r) {
      grid.visit_ring(c, r, [&](std::uint32_t j) {
        const Candidate cand{(reference[j] - q).squaredNorm(), j};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      });
      if (r >= grid.max_dim()) break;
      if (heap.size() == k) {
        const double bound = r * grid.cell();
        if (heap.top().first < bound * bound) break;
      }
    }
    sorted.clear();
    while (!heap.empty()) {
      sorted.push_back(heap.top());
      heap.pop();
    }
    std::reverse(sorted.begin(), sorted.end());
    for (std::size_t j = 0; j < k; ++j) {
      out.indices[qi * k + j] = sorted[j].second;
      out.distances[qi * k + j] = std::sqrt(sorted[j].first);
    }
  }
  return out;
}

std::vector<std::uint32_t> farthest_point_sample_from(std::span<const Vec3> points,
                                                      std::size_t m,
                                                      std::uint32_t first) {
  const std::size_t n = points.size();
  if (m == 0 || m > n) {
    throw InvalidArgument("farthest_point_sample: m must be in [1, N]");
  }
  if (first >= n) {
    throw InvalidArgument("farthest_point_sample: start index out of range");
  }
  std::vector<std::uint32_t> picked;
  picked.reserve(m);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::uint32_t current = first;
  picked.push_back(current);
  while (picked.size() < m) {
    const Vec3 c = points[current];
    double best = -1.0;
    std::uint32_t best_i = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = (points[i] - c).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best) {
        best = min_d2[i];
        best_i = static_cast<std::uint32_t>(i);
      }
    }
    current = best_i;
    picked.push_back(current);
  }
  return picked;
}

std::vector<std::uint32_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                                 std::uint64_t seed) {
  if (cloud.size() == 0) {
    throw InvalidArgument("farthest_point_sample: empty cloud");
  }
  const auto first = static_cast<std::uint32_t>(seed % cloud.size());
  return farthest_point_sample_from(cloud.positions, m, first);
}

std::uint32_t farthest_from_box_center(std::span<const Vec3> points) {
  if (points.empty()) {
    throw InvalidArgument("farthest_from_box_center: empty point set");
  }
  const Vec3 c = bounds(points).center();
  double best = -1.0;
  std::uint32_t best_i = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = (points[i] - c).squaredNorm();
    if (d2 > best) {
      best = d2;
      best_i = static_cast<std::uint32_t>(i);
    }
  }
  return best_i;
}

BallGroups ball_query(std::span<const std::uint32_t> centers, std::span<const Vec3> points,
                      double radius, std::size_t max_samples) {
  if (!(radius > 0.0)) {
    throw InvalidArgument("ball_query: radius must be positive");
  }
  if (max_samples == 0) {
    throw InvalidArgument("ball_query: max_samples must be positive");
  }
  BallGroups out;
  out.groups = centers.size();
  out.width = max_samples;
  out.indices.resize(centers.size() * max_samples);
  if (centers.empty()) return out;

  const UniformGrid grid(points, radius);
  const double r2 = radius * radius;
  // The grid may have enlarged its cell; widen the search ring to match.
  const int rings = static_cast<int>(std::ceil(radius / grid.cell()));
  std::vector<Candidate> found;
  for (std::size_t g = 0; g < centers.size(); ++g) {
    const std::uint32_t ci = centers[g];
    if (ci >= points.size()) {
      throw InvalidArgument("ball_query: center index out of range");
    }
    const Vec3& c = points[ci];
    found.clear();
    const auto cell = grid.cell_coords(c);
    for (int r = 0; r <= rings; ++r) {
      grid.visit_ring(cell, r, [&](std::uint32_t j) {
        const double d2 = (points[j] - c).squaredNorm();
        if (d2 <= r2) found.emplace_back(d2, j);
      });
    }
    const std::size_t take = std::min(found.size(), max_samples);
    std::partial_sort(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(take),
                      found.end());
    auto* row = out.indices.data() + g * max_samples;
    for (std::size_t j = 0; j < max_samples; ++j) {
      row[j] = j < take ? found[j].second : ci;
    }
  }
  return out;
}

}  // namespace layerseg

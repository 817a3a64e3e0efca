#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "layerseg/errors.hpp"

namespace layerseg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Scanned points with unit normals. `source_view` is either empty or holds one
/// viewpoint index per point.
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<int> source_view;

  std::size_t size() const { return positions.size(); }
  bool has_views() const { return !source_view.empty(); }

  /// Throws InvalidArgument when the cloud is empty, sizes disagree, a
  /// coordinate is non-finite or a normal is not unit length within 1e-6.
  void validate() const;

  /// Copy of the rows listed in `indices` (views carried along when present).
  PointCloud subset(std::span<const std::uint32_t> indices) const;
};

/// Row-major N x k neighbor table. Rows are sorted by (distance, index).
struct NeighborList {
  std::size_t rows = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> distances;

  std::span<const std::uint32_t> row(std::size_t i) const {
    return {indices.data() + i * k, k};
  }
  std::span<const double> row_distances(std::size_t i) const {
    return {distances.data() + i * k, k};
  }
};

/// Non-owning view of a dense row-major feature matrix.
template <typename T>
struct FeatureView {
  const T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  const T* row(std::size_t i) const { return data + i * cols; }
};

/// Exact k nearest neighbors in 3D using a uniform grid. Ties resolve to the
/// lower reference index.
NeighborList knn(std::span<const Vec3> query, std::span<const Vec3> reference,
                 std::size_t k);

inline NeighborList knn(const PointCloud& query, const PointCloud& reference,
                        std::size_t k) {
  return knn(std::span<const Vec3>(query.positions),
             std::span<const Vec3>(reference.positions), k);
}

/// Exact k nearest neighbors between rows of two feature matrices (brute force;
/// feature spaces are too high-dimensional for a grid).
template <typename T>
NeighborList knn(FeatureView<T> query, FeatureView<T> reference, std::size_t k) {
  if (k == 0 || k > reference.rows) {
    throw InvalidArgument("knn: k must be in [1, reference size]");
  }
  if (query.cols != reference.cols) {
    throw InvalidArgument("knn: feature widths differ");
  }
  NeighborList out;
  out.rows = query.rows;
  out.k = k;
  out.indices.resize(query.rows * k);
  out.distances.resize(query.rows * k);

  std::vector<std::pair<double, std::uint32_t>> cand(reference.rows);
  for (std::size_t i = 0; i < query.rows; ++i) {
    const T* q = query.row(i);
    for (std::size_t j = 0; j < reference.rows; ++j) {
      const T* r = reference.row(j);
      double d2 = 0.0;
      for (std::size_t c = 0; c < query.cols; ++c) {
        const double d = static_cast<double>(q[c]) - static_cast<double>(r[c]);
        d2 += d * d;
      }
      cand[j] = {d2, static_cast<std::uint32_t>(j)};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k),
                      cand.end());
    for (std::size_t j = 0; j < k; ++j) {
      out.indices[i * k + j] = cand[j].second;
      out.distances[i * k + j] = std::sqrt(cand[j].first);
    }
  }
  return out;
}

/// Greedy farthest point sampling starting from `first`. Each subsequent pick
/// maximizes the distance to the selected set, ties to the lower index.
std::vector<std::uint32_t> farthest_point_sample_from(std::span<const Vec3> points,
                                                      std::size_t m,
                                                      std::uint32_t first);

/// Farthest point sampling whose first index is `seed mod N`.
std::vector<std::uint32_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                                 std::uint64_t seed);

/// Index of the point farthest from the bounding-box center. Independent of
/// point order (up to exact distance ties), which keeps downstream sampling
/// permutation-equivariant.
std::uint32_t farthest_from_box_center(std::span<const Vec3> points);

/// Fixed-width radius groups: row g holds the (up to) `max_samples` nearest
/// points within `radius` of centers[g], padded with the center index.
struct BallGroups {
  std::size_t groups = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> indices;

  std::span<const std::uint32_t> row(std::size_t g) const {
    return {indices.data() + g * width, width};
  }
};

BallGroups ball_query(std::span<const std::uint32_t> centers, std::span<const Vec3> points,
                      double radius, std::size_t max_samples);

inline BallGroups ball_query(std::span<const std::uint32_t> centers,
                             const PointCloud& cloud, double radius,
                             std::size_t max_samples) {
  return ball_query(centers, std::span<const Vec3>(cloud.positions), radius,
                    max_samples);
}

/// positions <- scale * R * p + t, normals <- R * n (renormalized).
PointCloud transform(const PointCloud& cloud, const Mat3& rotation, double scale,
                     const Vec3& translation);

/// Rotation by `angle` radians about the unit `axis`.
Mat3 axis_rotation(const Vec3& axis, double angle);

bool is_orthonormal(const Mat3& m, double tol = 1e-6);

/// Axis-aligned bounds of a point set.
struct Box {
  Vec3 lo;
  Vec3 hi;
  Vec3 center() const { return 0.5 * (lo + hi); }
};

Box bounds(std::span<const Vec3> points);

}  // namespace layerseg

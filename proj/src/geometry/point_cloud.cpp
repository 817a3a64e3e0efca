#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Geometry>

#include "layerseg/geometry.hpp"

namespace layerseg {

void PointCloud::validate() const {
  if (positions.empty()) {
    throw InvalidArgument("point cloud is empty");
  }
  if (normals.size() != positions.size()) {
    throw InvalidArgument("point cloud: normals and positions differ in length");
  }
  if (!source_view.empty() && source_view.size() != positions.size()) {
    throw InvalidArgument("point cloud: source_view length mismatch");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].allFinite()) {
      throw InvalidArgument("point cloud: non-finite position at " + std::to_string(i));
    }
    if (std::abs(normals[i].norm() - 1.0) > 1e-6) {
      throw InvalidArgument("point cloud: normal " + std::to_string(i) +
                            " is not unit length");
    }
  }
}

PointCloud PointCloud::subset(std::span<const std::uint32_t> indices) const {
  PointCloud out;
  out.positions.reserve(indices.size());
  out.normals.reserve(indices.size());
  for (const auto i : indices) {
    out.positions.push_back(positions.at(i));
    out.normals.push_back(normals.at(i));
    if (has_views()) {
      out.source_view.push_back(source_view[i]);
    }
  }
  return out;
}

Box bounds(std::span<const Vec3> points) {
  Box b{Vec3::Constant(std::numeric_limits<double>::infinity()),
        Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& p : points) {
    b.lo = b.lo.cwiseMin(p);
    b.hi = b.hi.cwiseMax(p);
  }
  return b;
}

bool is_orthonormal(const Mat3& m, double tol) {
  const Mat3 gram = m.transpose() * m;
  return (gram - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol;
}

Mat3 axis_rotation(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

PointCloud transform(const PointCloud& cloud, const Mat3& rotation, double scale,
                     const Vec3& translation) {
  if (!is_orthonormal(rotation)) {
    throw InvalidArgument("transform: rotation is not orthonormal");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidArgument("transform: scale must be positive");
  }
  if (rotation == Mat3::Identity() && scale == 1.0 && translation.isZero(0.0)) {
    return cloud;
  }
  PointCloud out = cloud;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.positions[i] = scale * (rotation * cloud.positions[i]) + translation;
    out.normals[i] = (rotation * cloud.normals[i]).normalized();
  }
  return out;
}

}  // namespace layerseg

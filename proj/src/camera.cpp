#include "csepose/geom/camera.hpp"

#include <cmath>

namespace csepose::geom {

void Camera::validate() const {
  if (fx <= 0 || fy <= 0) throw std::invalid_argument("Camera: focal lengths must be positive");
  if (height <= 0 || width <= 0) throw std::invalid_argument("Camera: empty image");
  if (cx < 0 || cx > width || cy < 0 || cy > height) {
    throw std::invalid_argument("Camera: principal point outside the image");
  }
}

void RigidTransform::validate(double tol) const {
  const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) {
    throw std::invalid_argument("RigidTransform: rotation is not orthonormal");
  }
  if (rotation.determinant() <= 0) {
    throw std::invalid_argument("RigidTransform: rotation has non-positive determinant");
  }
}

Mat3 rotation_from_6d_plain(const Eigen::Matrix<double, 6, 1>& r) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  const double n1 = a1.norm();
  if (n1 < 1e-12) throw std::invalid_argument("rotation_from_6d: first triple is (near) zero");
  const Vec3 b1 = a1 / n1;
  const Vec3 res = a2 - a2.dot(b1) * b1;
  const double n2 = res.norm();
  if (n2 < 1e-9 * std::max(1.0, a2.norm())) {
    throw std::invalid_argument("rotation_from_6d: degenerate input, residual norm " + std::to_string(n2) +
                                " after projecting out b1");
  }
  const Vec3 b2 = res / n2;
  const Vec3 b3 = b1.cross(b2);
  Mat3 out;
  out.col(0) = b1;
  out.col(1) = b2;
  out.col(2) = b3;
  return out;
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Mat3 random_rotation(Rng& rng) {
  // uniform quaternion
  Eigen::Vector4d q;
  for (int i = 0; i < 4; ++i) q[i] = rng.normal();
  q.normalize();
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

double geodesic_angle(const Mat3& a, const Mat3& b) {
  const double c = ((a * b.transpose()).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

std::vector<ProjectedPoint> project_points(const Camera& cam, const ScaledPose& pose,
                                           const std::vector<Vec3>& pts) {
  std::vector<ProjectedPoint> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3 p = pose.apply(pts[i]);
    ProjectedPoint& o = out[i];
    o.depth = p.z();
    o.valid = p.z() > 0;
    if (o.valid) o.pixel = cam.pixel_of(p);
  }
  return out;
}

std::vector<Vec3> lift_depth(const std::vector<double>& depth, const std::vector<std::uint8_t>& mask,
                             const Camera& cam, int* skipped, std::vector<int>* pixel_indices) {
  const std::size_t n = static_cast<std::size_t>(cam.height) * static_cast<std::size_t>(cam.width);
  if (depth.size() != n || mask.size() != n) {
    throw std::invalid_argument("lift_depth: raster size does not match camera");
  }
  bool any_mask = false;
  std::vector<Vec3> out;
  int skip = 0;
  for (int r = 0; r < cam.height; ++r) {
    for (int c = 0; c < cam.width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cam.width + c;
      if (!mask[i]) continue;
      any_mask = true;
      const double z = depth[i];
      if (z <= 0) {
        ++skip;
        continue;
      }
      const double px = c + 0.5, py = r + 0.5;
      out.push_back(cam.ray_dir(px, py) * z);
      if (pixel_indices) pixel_indices->push_back(static_cast<int>(i));
    }
  }
  if (!any_mask) throw std::invalid_argument("lift_depth: empty mask");
  if (skipped) *skipped = skip;
  return out;
}

std::array<Vec3, 8> box_corners(const Vec3& lo, const Vec3& hi, const ScaledPose& pose) {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const Vec3 c((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
    out[static_cast<std::size_t>(i)] = pose.apply(c);
  }
  return out;
}

std::array<Vec3, 8> oriented_bbox(const TriMesh& mesh, const ScaledPose& pose) {
  if (pose.scale <= 0) throw std::invalid_argument("oriented_bbox: scale must be positive");
  const auto [lo, hi] = mesh.bounds();
  return box_corners(lo, hi, pose);
}

}  // namespace csepose::geom

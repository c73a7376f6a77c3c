#pragma once

#include <optional>
#include <vector>

#include "csepose/core/rng.hpp"
#include "csepose/geom/mesh.hpp"

namespace csepose::geom {

// Pinhole intrinsics. Continuous pixel coordinates: pixel (row r, col c) has
// its center at (c + 0.5, r + 0.5); the image spans [0,w] x [0,h].
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int height = 0, width = 0;

  void validate() const;
  Eigen::Vector2d pixel_of(const Vec3& cam_point) const {
    return {fx * cam_point.x() / cam_point.z() + cx, fy * cam_point.y() / cam_point.z() + cy};
  }
  // Ray direction through a continuous pixel coordinate (camera at origin).
  Vec3 ray_dir(double px, double py) const { return {(px - cx) / fx, (py - cy) / fy, 1.0}; }
  bool inside(double px, double py) const { return px >= 0 && px <= width && py >= 0 && py <= height; }

  // Intrinsics of the s-times-downsampled image (pixel-center convention
  // makes this a pure scale).
  Camera downsampled(int s) const {
    return Camera{fx / s, fy / s, cx / s, cy / s, height / s, width / s};
  }
};

// Rotation + translation, det(R) = +1.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate(double tol = 1e-9) const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const {
    return RigidTransform{rotation.transpose(), -(rotation.transpose() * translation)};
  }
};

// Similarity pose: scene = R * (s * canonical) + t.
struct ScaledPose {
  RigidTransform rigid;
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return rigid.apply(scale * p); }
  Vec3 invert(const Vec3& q) const { return rigid.rotation.transpose() * (q - rigid.translation) / scale; }
};

// Gram-Schmidt 6D-to-rotation map (plain version; the tape twin lives in
// diffgeom). Rejects degenerate input with a condition report.
Mat3 rotation_from_6d_plain(const Eigen::Matrix<double, 6, 1>& r);

Mat3 axis_angle(const Vec3& axis, double angle);
Mat3 random_rotation(Rng& rng);  // uniform over SO(3)

double geodesic_angle(const Mat3& a, const Mat3& b);  // radians

struct ProjectedPoint {
  Eigen::Vector2d pixel;
  double depth = 0;
  bool valid = false;  // depth > 0
};

std::vector<ProjectedPoint> project_points(const Camera& cam, const ScaledPose& pose,
                                           const std::vector<Vec3>& pts);

// Scene points from a depth raster: rows of (x,y,z) for every masked pixel
// with positive depth. Pixel order is row-major; skipped pixel count is
// reported through skipped (nullable).
std::vector<Vec3> lift_depth(const std::vector<double>& depth, const std::vector<std::uint8_t>& mask,
                             const Camera& cam, int* skipped = nullptr,
                             std::vector<int>* pixel_indices = nullptr);

// Axis-aligned canonical box, scaled and posed. Corner order: bit i of the
// index selects max (1) or min (0) along axis i (x = bit0, y = bit1, z = bit2).
std::array<Vec3, 8> oriented_bbox(const TriMesh& mesh, const ScaledPose& pose);
std::array<Vec3, 8> box_corners(const Vec3& lo, const Vec3& hi, const ScaledPose& pose);

}  // namespace csepose::geom

#pragma once

#include <optional>

#include "csepose/geom/camera.hpp"

namespace csepose::geom {

struct RayHit {
  int face = -1;
  double t = 0;       // along the un-normalized ray direction
  double u = 0, v = 0;  // barycentric weights of vertices b and c
  Vec3 point = Vec3::Zero();
};

// Median-split BVH over triangles; geometry is captured by reference layout
// (vertices copied at build). Nearest-hit queries break exact-t ties by the
// lowest face index.
class MeshBvh {
 public:
  MeshBvh(const std::vector<Vec3>& vertices, const std::vector<std::array<int, 3>>& faces);

  std::optional<RayHit> nearest_hit(const Vec3& origin, const Vec3& dir, double t_min = 1e-9) const;
  // True if any face is hit with t in (t_min, t_max).
  bool any_hit_before(const Vec3& origin, const Vec3& dir, double t_max, double t_min = 1e-9) const;

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;   // children, or
    int begin = 0, end = 0;      // leaf face range in order_
  };
  int build(int begin, int end, int depth);
  std::vector<Vec3> verts_;
  std::vector<std::array<int, 3>> faces_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

// Moller-Trumbore; returns hit with t > t_min.
std::optional<RayHit> ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                   const Vec3& c, double t_min = 1e-9);

// Casts the pixel ray against the posed mesh; the returned hit point and
// barycentrics are in the canonical (pre-pose) frame.
std::optional<RayHit> inverse_project(const Camera& cam, const ScaledPose& pose, const TriMesh& mesh,
                                      const MeshBvh& canonical_bvh, double px, double py);

// Per-vertex visibility under the posed projection: a vertex is visible iff
// the camera ray reaches it with no face strictly closer (depth slack 1e-5).
std::vector<std::uint8_t> vertex_visibility(const TriMesh& mesh, const ScaledPose& pose,
                                            const Camera& cam);

}  // namespace csepose::geom

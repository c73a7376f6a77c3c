#pragma once

#include "csepose/diff/ops.hpp"
#include "csepose/geom/raycast.hpp"
#include "csepose/geom/sampling.hpp"

namespace csepose::geom {

using diff::Var;

// Gram-Schmidt 6D -> rotation on the tape. r6 is shape [6]; output [3,3] with
// columns (b1, b2, b1 x b2). Degenerate input rejects eagerly.
Var rotation_from_6d(Var r6);

struct ProjectedVar {
  Var pixels;  // [K,2]
  Var depths;  // [K,1]
};

// Pinhole projection of canonical points through a posed transform, all
// differentiable. Caller must ensure positive depths (check `depths` values).
ProjectedVar project_points(const Camera& cam, Var rotation, Var translation, Var points);
// Same but for points already in the camera frame.
ProjectedVar project_camera_points(const Camera& cam, Var cam_points);

// scene = R * (s * canonical) + t for an [N,3] array of points.
Var transform_points(Var rotation, Var translation, Var points, double scale = 1.0);

// mean over vertices of ||(L v)||^2 with the uniform one-ring Laplacian.
Var laplacian_term(Var verts, Var laplacian_const);

// Exact symmetric chamfer with grid-accelerated nearest neighbors; gradients
// route through the argmin pairs.
Var chamfer(Var a, Var b);

// Surface samples as a differentiable function of the vertices: three row
// gathers blended with fixed barycentric weights.
Var surface_points_var(Var verts, const std::vector<std::array<int, 3>>& faces,
                       const std::vector<SurfaceSample>& params);

// Chamfer between the K-transformed sample cloud and an independent sample
// cloud of the same mesh (sample layout fixed by seed at build time).
Var symmetry_loss(Var verts, const std::vector<std::array<int, 3>>& faces,
                  const std::vector<Vec3>& current_verts, const SymmetrySpec& spec, int m, int k,
                  std::uint64_t seed);

// Differentiable ray-cast inverse projection for a fixed face assignment:
// for each query pixel (rows of `pixels`, [K,2]) the caller supplies the face
// hit by the forward ray cast; the canonical-frame hit point is recomputed on
// the tape via the Moller-Trumbore/Cramer solve so gradients reach the pixel
// coordinates, the pose and the vertices. Output [K,3].
Var raycast_points_on_tape(const Camera& cam, Var pixels, Var rotation, Var translation, Var verts,
                           const std::vector<std::array<int, 3>>& faces,
                           const std::vector<int>& hit_faces, double scale = 1.0);

}  // namespace csepose::geom

#pragma once

#include "csepose/core/rng.hpp"
#include "csepose/geom/mesh.hpp"

namespace csepose::geom {

// Area-weighted surface sample, stored as (face, barycentric) so the sampled
// points stay a fixed linear function of the vertices.
struct SurfaceSample {
  int face = 0;
  double u = 0, v = 0;  // weights of vertices b and c; a gets 1-u-v
};

std::vector<SurfaceSample> sample_surface_params(const TriMesh& mesh, int m, std::uint64_t seed);
std::vector<Vec3> surface_points(const std::vector<Vec3>& vertices,
                                 const std::vector<std::array<int, 3>>& faces,
                                 const std::vector<SurfaceSample>& params);
std::vector<Vec3> sample_surface(const TriMesh& mesh, int m, std::uint64_t seed);

// Point transforms of the symmetry group: K evenly spaced rotations about the
// axis, or {identity, mirror across the plane normal to the axis} for flips.
std::vector<Mat3> symmetry_transforms(const SymmetrySpec& spec, int k);

// Exact nearest-neighbor indices of each query in targets (uniform-grid
// accelerated; ties resolved to the lowest target index).
std::vector<int> nearest_indices(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets);

// Symmetric mean squared nearest-neighbor distance (both directions).
double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Chamfer between the K-transformed m-sample cloud and a fresh m-sample cloud
// of the same mesh; the symmetry regularizer.
double symmetry_loss_plain(const TriMesh& mesh, const SymmetrySpec& spec, int m, int k,
                           std::uint64_t seed);

}  // namespace csepose::geom

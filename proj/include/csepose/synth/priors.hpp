#pragma once

#include <string>

#include "csepose/geom/mesh.hpp"

namespace csepose::synth {

using geom::SymmetryKind;
using geom::SymmetrySpec;
using geom::TriMesh;
using geom::Vec3;

struct CategoryPrior {
  std::string category;
  TriMesh mesh;          // unit-cube normalized, y up
  SymmetrySpec symmetry;
  std::vector<int> keypoint_vertices;  // 8 spread vertices for transfer eval
};

// Parametric priors standing in for simplified dataset meshes. Vertex counts
// land within 10% of the reference counts (bottle 642, bowl 482, laptop 995).
CategoryPrior make_prior(const std::string& category);

const std::vector<std::string>& known_categories();

// Shape helpers (also used by tests as analytic oracles).
TriMesh make_icosphere(int subdivisions, double radius = 0.5);
TriMesh make_cylinder(double radius, double height, int rings, int segments);
// Lathe a radial profile (r_i >= 0, y ascending) around the y axis. Profile
// entries with r == 0 become poles; the surface is open wherever the profile
// ends with r > 0 and close_* is false.
struct LathePoint {
  double r = 0, y = 0;
};
TriMesh make_lathe(const std::vector<LathePoint>& profile, int segments);
// Grid-subdivided closed box surface.
TriMesh make_grid_box(const Vec3& size, const Vec3& center, int nx, int ny, int nz);

void normalize_to_unit_cube(TriMesh& mesh);
TriMesh merge_meshes(const TriMesh& a, const TriMesh& b);
void rotate_mesh(TriMesh& mesh, const geom::Mat3& rot, const Vec3& pivot);
// Append winding-flipped copies of every face (renders from both sides).
void make_double_sided(TriMesh& mesh);

// Farthest-point sampled vertex ids, deterministic from vertex 0.
std::vector<int> procedural_keypoints(const TriMesh& mesh, int count);

}  // namespace csepose::synth

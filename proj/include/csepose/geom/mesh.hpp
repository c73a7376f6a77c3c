#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csepose/diff/ndarray.hpp"

namespace csepose::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Triangle mesh with shared topology across instances of a category.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }

  // Throws on out-of-range indices or faces with a repeated vertex.
  void validate() const;
  // Additionally requires the vertices to fit the unit cube centered at 0.
  void validate_canonical() const;

  Vec3 face_normal(int f) const;
  double face_area(int f) const;
  double total_area() const;
  std::array<Vec3, 2> bounds() const;  // {min, max}
};

// Per-instance deformation over a shared prior. Faces are the prior's.
struct DeformedMesh {
  const TriMesh* prior = nullptr;
  std::vector<Vec3> delta;

  std::vector<Vec3> vertices() const;
  TriMesh as_mesh() const;
};

diff::NdArray vertices_to_array(const std::vector<Vec3>& v);
std::vector<Vec3> array_to_vertices(const diff::NdArray& a);

// Wavefront OBJ subset: `v x y z` and `f i j k` (1-based absolute indices)
// lines only. Quads and relative indices are rejected.
TriMesh load_obj(const std::string& path);
void save_obj(const TriMesh& mesh, const std::string& path);

// Uniform one-ring Laplacian: rows of (I - A) with A the row-normalized
// vertex adjacency. Returned dense for tape matmul; isolated vertices get a
// zero row (their smoothness term is 0) and are reported via the return.
struct LaplacianMatrix {
  diff::NdArray matrix;  // [N,N]
  int isolated_count = 0;
};
LaplacianMatrix build_laplacian(const TriMesh& mesh);

// mean over vertices of || v - mean(one-ring neighbors) ||^2
double laplacian_smoothness(const TriMesh& mesh);

enum class SymmetryKind { none, rotation, flip };

struct SymmetrySpec {
  SymmetryKind kind = SymmetryKind::none;
  Vec3 axis = Vec3::UnitY();
};

const char* symmetry_kind_name(SymmetryKind k);
SymmetryKind symmetry_kind_from_name(const std::string& name);

}  // namespace csepose::geom

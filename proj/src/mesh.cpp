#include "csepose/geom/mesh.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace csepose::geom {

void TriMesh::validate() const {
  const int n = vertex_count();
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& fc = faces[f];
    for (int k = 0; k < 3; ++k) {
      if (fc[k] < 0 || fc[k] >= n) {
        throw std::invalid_argument("TriMesh: face " + std::to_string(f) + " index out of range");
      }
    }
    if (fc[0] == fc[1] || fc[1] == fc[2] || fc[0] == fc[2]) {
      throw std::invalid_argument("TriMesh: face " + std::to_string(f) + " has a repeated vertex");
    }
  }
}

void TriMesh::validate_canonical() const {
  validate();
  for (const auto& v : vertices) {
    if (v.cwiseAbs().maxCoeff() > 0.5 + 1e-9) {
      throw std::invalid_argument("TriMesh: canonical prior exceeds the unit cube");
    }
  }
}

Vec3 TriMesh::face_normal(int f) const {
  const auto& fc = faces[static_cast<std::size_t>(f)];
  const Vec3 n = (vertices[fc[1]] - vertices[fc[0]]).cross(vertices[fc[2]] - vertices[fc[0]]);
  const double len = n.norm();
  return len > 0 ? Vec3(n / len) : Vec3::Zero();
}

double TriMesh::face_area(int f) const {
  const auto& fc = faces[static_cast<std::size_t>(f)];
  return 0.5 * (vertices[fc[1]] - vertices[fc[0]]).cross(vertices[fc[2]] - vertices[fc[0]]).norm();
}

double TriMesh::total_area() const {
  double a = 0;
  for (int f = 0; f < face_count(); ++f) a += face_area(f);
  return a;
}

std::array<Vec3, 2> TriMesh::bounds() const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return {lo, hi};
}

std::vector<Vec3> DeformedMesh::vertices() const {
  if (!prior || delta.size() != prior->vertices.size()) {
    throw std::invalid_argument("DeformedMesh: delta does not match the prior");
  }
  std::vector<Vec3> out(prior->vertices.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = prior->vertices[i] + delta[i];
  return out;
}

TriMesh DeformedMesh::as_mesh() const {
  TriMesh m;
  m.vertices = vertices();
  m.faces = prior->faces;
  return m;
}

diff::NdArray vertices_to_array(const std::vector<Vec3>& v) {
  diff::NdArray a = diff::NdArray::zeros({static_cast<std::int64_t>(v.size()), 3});
  for (std::size_t i = 0; i < v.size(); ++i) {
    a[static_cast<std::int64_t>(3 * i)] = v[i].x();
    a[static_cast<std::int64_t>(3 * i + 1)] = v[i].y();
    a[static_cast<std::int64_t>(3 * i + 2)] = v[i].z();
  }
  return a;
}

std::vector<Vec3> array_to_vertices(const diff::NdArray& a) {
  if (a.rank() != 2 || a.shape[1] != 3) {
    throw std::invalid_argument("array_to_vertices: expects [n,3], got " + diff::shape_str(a.shape));
  }
  std::vector<Vec3> v(static_cast<std::size_t>(a.shape[0]));
  for (std::int64_t i = 0; i < a.shape[0]; ++i) {
    v[static_cast<std::size_t>(i)] = Vec3(a[3 * i], a[3 * i + 1], a[3 * i + 2]);
  }
  return v;
}

TriMesh load_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_obj: cannot open " + path);
  TriMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream in(line);
    std::string tag;
    in >> tag;
    if (tag == "v") {
      double x, y, z;
      if (!(in >> x >> y >> z)) {
        throw std::runtime_error("load_obj: bad vertex at line " + std::to_string(lineno));
      }
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<long> idx;
      std::string tok;
      while (in >> tok) {
        if (tok.find('/') != std::string::npos) {
          throw std::runtime_error("load_obj: only plain vertex indices supported (line " +
                                   std::to_string(lineno) + ")");
        }
        idx.push_back(std::stol(tok));
      }
      if (idx.size() != 3) {
        throw std::runtime_error("load_obj: non-triangle face at line " + std::to_string(lineno));
      }
      std::array<int, 3> fc{};
      for (int k = 0; k < 3; ++k) {
        if (idx[static_cast<std::size_t>(k)] < 1) {
          throw std::runtime_error("load_obj: relative/zero index at line " + std::to_string(lineno));
        }
        fc[static_cast<std::size_t>(k)] = static_cast<int>(idx[static_cast<std::size_t>(k)]) - 1;
      }
      mesh.faces.push_back(fc);
    }
    // other tags (vn, vt, o, g, s, mtllib, usemtl) are ignored
  }
  mesh.validate();
  return mesh;
}

void save_obj(const TriMesh& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_obj: cannot write " + path);
  f.precision(17);
  for (const auto& v : mesh.vertices) f << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& fc : mesh.faces) {
    f << "f " << fc[0] + 1 << " " << fc[1] + 1 << " " << fc[2] + 1 << "\n";
  }
}

LaplacianMatrix build_laplacian(const TriMesh& mesh) {
  const int n = mesh.vertex_count();
  std::vector<std::set<int>> nbr(static_cast<std::size_t>(n));
  for (const auto& fc : mesh.faces) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        if (a != b) nbr[static_cast<std::size_t>(fc[a])].insert(fc[b]);
      }
    }
  }
  LaplacianMatrix out;
  out.matrix = diff::NdArray::zeros({n, n});
  for (int i = 0; i < n; ++i) {
    const auto& ni = nbr[static_cast<std::size_t>(i)];
    if (ni.empty()) {
      ++out.isolated_count;  // zero row: isolated vertex contributes 0
      continue;
    }
    out.matrix[static_cast<std::int64_t>(i) * n + i] = 1.0;
    const double w = -1.0 / static_cast<double>(ni.size());
    for (int j : ni) out.matrix[static_cast<std::int64_t>(i) * n + j] = w;
  }
  if (out.isolated_count > 0) {
    std::cerr << "[csepose] warning: laplacian over mesh with " << out.isolated_count
              << " isolated vertices (they contribute 0)\n";
  }
  return out;
}

double laplacian_smoothness(const TriMesh& mesh) {
  if (mesh.faces.empty()) throw std::invalid_argument("laplacian_smoothness: mesh has no edges");
  const LaplacianMatrix lap = build_laplacian(mesh);
  const int n = mesh.vertex_count();
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    Vec3 r = Vec3::Zero();
    for (int j = 0; j < n; ++j) {
      const double w = lap.matrix[static_cast<std::int64_t>(i) * n + j];
      if (w != 0.0) r += w * mesh.vertices[static_cast<std::size_t>(j)];
    }
    acc += r.squaredNorm();
  }
  return acc / static_cast<double>(n);
}

const char* symmetry_kind_name(SymmetryKind k) {
  switch (k) {
    case SymmetryKind::none: return "none";
    case SymmetryKind::rotation: return "rotation";
    case SymmetryKind::flip: return "flip";
  }
  return "?";
}

SymmetryKind symmetry_kind_from_name(const std::string& name) {
  if (name == "none") return SymmetryKind::none;
  if (name == "rotation") return SymmetryKind::rotation;
  if (name == "flip") return SymmetryKind::flip;
  throw std::invalid_argument("unknown symmetry kind '" + name + "'");
}

}  // namespace csepose::geom

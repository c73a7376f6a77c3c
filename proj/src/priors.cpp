#include "csepose/synth/priors.hpp"

#include "csepose/geom/camera.hpp"

#include <cmath>
#include <map>

namespace csepose::synth {

namespace {

double smoothstep(double a, double b, double x) {
  const double t = std::clamp((x - a) / (b - a), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

TriMesh make_lathe(const std::vector<LathePoint>& profile, int segments) {
  if (profile.size() < 2 || segments < 3) throw std::invalid_argument("make_lathe: bad parameters");
  TriMesh mesh;
  // vertex ids per profile row: either a pole (single id) or a ring
  std::vector<std::vector<int>> rows;
  for (const auto& p : profile) {
    std::vector<int> row;
    if (p.r <= 0.0) {
      row.push_back(mesh.vertex_count());
      mesh.vertices.emplace_back(0.0, p.y, 0.0);
    } else {
      for (int s = 0; s < segments; ++s) {
        const double a = 2.0 * M_PI * s / segments;
        row.push_back(mesh.vertex_count());
        mesh.vertices.emplace_back(p.r * std::cos(a), p.y, p.r * std::sin(a));
      }
    }
    rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const auto& lo = rows[i];
    const auto& hi = rows[i + 1];
    if (lo.size() == 1 && hi.size() == 1) continue;  // degenerate spike
    if (lo.size() == 1) {
      // bottom pole fan, wound outward (downward)
      for (int s = 0; s < segments; ++s) {
        mesh.faces.push_back({lo[0], hi[static_cast<std::size_t>(s)],
                              hi[static_cast<std::size_t>((s + 1) % segments)]});
      }
    } else if (hi.size() == 1) {
      for (int s = 0; s < segments; ++s) {
        mesh.faces.push_back({lo[static_cast<std::size_t>((s + 1) % segments)],
                              lo[static_cast<std::size_t>(s)], hi[0]});
      }
    } else {
      for (int s = 0; s < segments; ++s) {
        const int s2 = (s + 1) % segments;
        const int a = lo[static_cast<std::size_t>(s)], b = lo[static_cast<std::size_t>(s2)];
        const int c = hi[static_cast<std::size_t>(s2)], d = hi[static_cast<std::size_t>(s)];
        mesh.faces.push_back({a, c, b});
        mesh.faces.push_back({a, d, c});
      }
    }
  }
  mesh.validate();
  return mesh;
}

TriMesh make_cylinder(double radius, double height, int rings, int segments) {
  std::vector<LathePoint> profile;
  profile.push_back({0.0, -height / 2});
  for (int i = 0; i <= rings; ++i) {
    profile.push_back({radius, -height / 2 + height * i / rings});
  }
  profile.push_back({0.0, height / 2});
  return make_lathe(profile, segments);
}

TriMesh make_icosphere(int subdivisions, double radius) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                             {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                             {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& v : verts) v.normalize();

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int id = static_cast<int>(verts.size());
      verts.push_back((verts[static_cast<std::size_t>(a)] + verts[static_cast<std::size_t>(b)]).normalized());
      midpoint[key] = id;
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  TriMesh mesh;
  mesh.vertices.reserve(verts.size());
  for (const auto& v : verts) mesh.vertices.push_back(v * radius);
  mesh.faces = std::move(faces);
  mesh.validate();
  return mesh;
}

TriMesh make_grid_box(const Vec3& size, const Vec3& center, int nx, int ny, int nz) {
  std::map<std::array<int, 3>, int> ids;
  TriMesh mesh;
  auto vertex = [&](int i, int j, int k) {
    const std::array<int, 3> key{i, j, k};
    auto it = ids.find(key);
    if (it != ids.end()) return it->second;
    const int id = mesh.vertex_count();
    mesh.vertices.emplace_back(center.x() + size.x() * (static_cast<double>(i) / nx - 0.5),
                               center.y() + size.y() * (static_cast<double>(j) / ny - 0.5),
                               center.z() + size.z() * (static_cast<double>(k) / nz - 0.5));
    ids[key] = id;
    return id;
  };
  auto quad = [&](int a, int b, int c, int d) {
    mesh.faces.push_back({a, b, c});
    mesh.faces.push_back({a, c, d});
  };
  // y- and y+ faces
  for (int i = 0; i < nx; ++i) {
    for (int k = 0; k < nz; ++k) {
      quad(vertex(i, 0, k), vertex(i + 1, 0, k), vertex(i + 1, 0, k + 1), vertex(i, 0, k + 1));
      quad(vertex(i, ny, k), vertex(i, ny, k + 1), vertex(i + 1, ny, k + 1), vertex(i + 1, ny, k));
    }
  }
  // x- and x+
  for (int j = 0; j < ny; ++j) {
    for (int k = 0; k < nz; ++k) {
      quad(vertex(0, j, k), vertex(0, j, k + 1), vertex(0, j + 1, k + 1), vertex(0, j + 1, k));
      quad(vertex(nx, j, k), vertex(nx, j + 1, k), vertex(nx, j + 1, k + 1), vertex(nx, j, k + 1));
    }
  }
  // z- and z+
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      quad(vertex(i, j, 0), vertex(i, j + 1, 0), vertex(i + 1, j + 1, 0), vertex(i + 1, j, 0));
      quad(vertex(i, j, nz), vertex(i + 1, j, nz), vertex(i + 1, j + 1, nz), vertex(i, j + 1, nz));
    }
  }
  mesh.validate();
  return mesh;
}

void normalize_to_unit_cube(TriMesh& mesh) {
  const auto [lo, hi] = mesh.bounds();
  const Vec3 center = 0.5 * (lo + hi);
  const double extent = (hi - lo).maxCoeff();
  const double s = extent > 0 ? 1.0 / extent : 1.0;
  for (auto& v : mesh.vertices) v = (v - center) * s;
}

TriMesh merge_meshes(const TriMesh& a, const TriMesh& b) {
  TriMesh out = a;
  const int off = a.vertex_count();
  out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
  for (const auto& f : b.faces) out.faces.push_back({f[0] + off, f[1] + off, f[2] + off});
  return out;
}

void rotate_mesh(TriMesh& mesh, const geom::Mat3& rot, const Vec3& pivot) {
  for (auto& v : mesh.vertices) v = rot * (v - pivot) + pivot;
}

void make_double_sided(TriMesh& mesh) {
  const std::size_t n = mesh.faces.size();
  mesh.faces.reserve(2 * n);
  for (std::size_t f = 0; f < n; ++f) {
    const auto& fc = mesh.faces[f];
    mesh.faces.push_back({fc[0], fc[2], fc[1]});
  }
}

std::vector<int> procedural_keypoints(const TriMesh& mesh, int count) {
  std::vector<int> picked{0};
  std::vector<double> dist(mesh.vertices.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(picked.size()) < count) {
    const Vec3& last = mesh.vertices[static_cast<std::size_t>(picked.back())];
    int far_idx = 0;
    double far_d = -1;
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      dist[i] = std::min(dist[i], (mesh.vertices[i] - last).squaredNorm());
      if (dist[i] > far_d) {
        far_d = dist[i];
        far_idx = static_cast<int>(i);
      }
    }
    picked.push_back(far_idx);
  }
  return picked;
}

namespace {

CategoryPrior make_bottle() {
  // two-radius profile: cylindrical body, smooth shoulder, narrow neck
  std::vector<LathePoint> profile;
  profile.push_back({0.0, -0.5});
  const int rings = 40;
  for (int i = 0; i < rings; ++i) {
    const double y = -0.5 + (i + 0.5) / rings;  // rings strictly inside (-0.5, 0.5)
    double r;
    const double body = 0.28, neck = 0.115;
    if (y < 0.05) {
      r = body * (1.0 - 0.08 * smoothstep(0.05, -0.5, y));  // slight base taper
    } else if (y < 0.28) {
      r = body - (body - neck) * smoothstep(0.05, 0.28, y);  // shoulder
    } else if (y < 0.42) {
      r = neck;
    } else {
      r = neck * (1.0 - 0.6 * smoothstep(0.42, 0.5, y));  // lip taper to the cap
    }
    profile.push_back({r, y});
  }
  profile.push_back({0.0, 0.5});
  CategoryPrior prior;
  prior.category = "bottle";
  prior.mesh = make_lathe(profile, 16);
  normalize_to_unit_cube(prior.mesh);
  prior.symmetry = SymmetrySpec{SymmetryKind::rotation, Vec3::UnitY()};
  return prior;
}

CategoryPrior make_bowl() {
  // open lathed shell: spherical cap with a widened rim, no top cap. The
  // sheet is single-layer, so faces are doubled to render from both sides
  // under backface culling (vertex count unchanged).
  std::vector<LathePoint> profile;
  profile.push_back({0.0, -0.5});
  const int rings = 30;
  const double phi_max = 1.75;  // a bit past the hemisphere for a lip
  for (int i = 1; i <= rings; ++i) {
    const double phi = phi_max * i / rings;
    profile.push_back({0.5 * std::sin(phi), -0.5 * std::cos(phi)});
  }
  CategoryPrior prior;
  prior.category = "bowl";
  prior.mesh = make_lathe(profile, 16);
  make_double_sided(prior.mesh);
  normalize_to_unit_cube(prior.mesh);
  prior.symmetry = SymmetrySpec{SymmetryKind::rotation, Vec3::UnitY()};
  return prior;
}

CategoryPrior make_laptop() {
  // two hinged slabs sharing one topology; hinge along the x axis
  TriMesh base = make_grid_box({0.9, 0.05, 0.58}, {0.0, 0.0, 0.0}, 16, 2, 12);
  TriMesh screen = make_grid_box({0.9, 0.05, 0.58}, {0.0, 0.0, 0.0}, 16, 2, 12);
  const Vec3 hinge(0.0, 0.0, -0.29);
  // open the screen 110 degrees from flat
  rotate_mesh(screen, geom::axis_angle(Vec3::UnitX(), -110.0 * M_PI / 180.0), hinge);
  // shift so the hinge edges meet
  for (auto& v : screen.vertices) v += Vec3(0.0, 0.025, 0.0);
  for (auto& v : base.vertices) v += Vec3(0.0, -0.025, 0.0);
  CategoryPrior prior;
  prior.category = "laptop";
  prior.mesh = merge_meshes(base, screen);
  normalize_to_unit_cube(prior.mesh);
  prior.symmetry = SymmetrySpec{SymmetryKind::flip, Vec3::UnitX()};  // left-right mirror
  return prior;
}

}  // namespace

const std::vector<std::string>& known_categories() {
  static const std::vector<std::string> cats = {"bottle", "bowl", "laptop"};
  return cats;
}

CategoryPrior make_prior(const std::string& category) {
  CategoryPrior prior;
  if (category == "bottle") {
    prior = make_bottle();
  } else if (category == "bowl") {
    prior = make_bowl();
  } else if (category == "laptop") {
    prior = make_laptop();
  } else {
    throw std::invalid_argument("make_prior: unknown category '" + category + "'");
  }
  prior.mesh.validate_canonical();
  prior.keypoint_vertices = procedural_keypoints(prior.mesh, 8);
  return prior;
}

}  // namespace csepose::synth

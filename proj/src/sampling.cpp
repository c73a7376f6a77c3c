#include "csepose/geom/sampling.hpp"

#include "csepose/geom/camera.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace csepose::geom {

std::vector<SurfaceSample> sample_surface_params(const TriMesh& mesh, int m, std::uint64_t seed) {
  if (m <= 0) throw std::invalid_argument("sample_surface: m must be positive");
  std::vector<double> cum(mesh.faces.size());
  double acc = 0;
  for (int f = 0; f < mesh.face_count(); ++f) {
    acc += mesh.face_area(f);
    cum[static_cast<std::size_t>(f)] = acc;
  }
  if (acc <= 0) throw std::invalid_argument("sample_surface: mesh has zero total area");

  Rng rng(seed);
  std::vector<SurfaceSample> out(static_cast<std::size_t>(m));
  for (auto& s : out) {
    const double r = rng.uniform() * acc;
    const auto it = std::lower_bound(cum.begin(), cum.end(), r);
    s.face = static_cast<int>(it == cum.end() ? cum.size() - 1 : static_cast<std::size_t>(it - cum.begin()));
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1.0) {  // fold back into the triangle
      u = 1.0 - u;
      v = 1.0 - v;
    }
    s.u = u;
    s.v = v;
  }
  return out;
}

std::vector<Vec3> surface_points(const std::vector<Vec3>& vertices,
                                 const std::vector<std::array<int, 3>>& faces,
                                 const std::vector<SurfaceSample>& params) {
  std::vector<Vec3> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto& f = faces[static_cast<std::size_t>(p.face)];
    out[i] = (1.0 - p.u - p.v) * vertices[static_cast<std::size_t>(f[0])] +
             p.u * vertices[static_cast<std::size_t>(f[1])] + p.v * vertices[static_cast<std::size_t>(f[2])];
  }
  return out;
}

std::vector<Vec3> sample_surface(const TriMesh& mesh, int m, std::uint64_t seed) {
  return surface_points(mesh.vertices, mesh.faces, sample_surface_params(mesh, m, seed));
}

std::vector<Mat3> symmetry_transforms(const SymmetrySpec& spec, int k) {
  if (spec.kind == SymmetryKind::none) {
    throw std::invalid_argument("symmetry_transforms: kind is none");
  }
  const Vec3 axis = spec.axis.normalized();
  std::vector<Mat3> out;
  if (spec.kind == SymmetryKind::rotation) {
    if (k < 1) throw std::invalid_argument("symmetry_transforms: K must be >= 1");
    for (int i = 0; i < k; ++i) {
      out.push_back(axis_angle(axis, 2.0 * M_PI * i / static_cast<double>(k)));
    }
  } else {
    out.push_back(Mat3::Identity());
    out.push_back(Mat3::Identity() - 2.0 * axis * axis.transpose());  // mirror
  }
  return out;
}

namespace {

struct Grid {
  Vec3 lo;
  double h = 1.0;
  int nx = 1, ny = 1, nz = 1;
  std::map<std::int64_t, std::vector<int>> cells;

  std::int64_t key(int x, int y, int z) const {
    return (static_cast<std::int64_t>(x) * ny + y) * nz + z;
  }
  std::array<int, 3> cell_of(const Vec3& p) const {
    auto cl = [&](double v, int n) {
      return std::clamp(static_cast<int>(std::floor(v)), 0, n - 1);
    };
    return {cl((p.x() - lo.x()) / h, nx), cl((p.y() - lo.y()) / h, ny), cl((p.z() - lo.z()) / h, nz)};
  }
};

Grid build_grid(const std::vector<Vec3>& pts) {
  Grid g;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 ext = (hi - lo).cwiseMax(1e-12);
  // cell size keyed to the longest axis so degenerate (flat/linear) clouds
  // cannot explode the ring search
  const double cells_per_axis = std::max(1.0, std::cbrt(static_cast<double>(pts.size())));
  g.h = std::max(ext.maxCoeff() / cells_per_axis, 1e-9);
  g.lo = lo;
  g.nx = std::max(1, static_cast<int>(std::ceil(ext.x() / g.h)));
  g.ny = std::max(1, static_cast<int>(std::ceil(ext.y() / g.h)));
  g.nz = std::max(1, static_cast<int>(std::ceil(ext.z() / g.h)));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto c = g.cell_of(pts[i]);
    g.cells[g.key(c[0], c[1], c[2])].push_back(static_cast<int>(i));
  }
  return g;
}

}  // namespace

std::vector<int> nearest_indices(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets) {
  if (targets.empty()) throw std::invalid_argument("nearest_indices: empty target cloud");
  const Grid grid = build_grid(targets);
  const int max_ring = grid.nx + grid.ny + grid.nz + 2;

  std::vector<int> out(queries.size(), -1);
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const Vec3& q = queries[qi];
    const auto qc = grid.cell_of(q);
    double best_d2 = std::numeric_limits<double>::infinity();
    int best = -1;
    for (int ring = 0; ring <= max_ring; ++ring) {
      // everything in ring r is at least (r-1)*h away from q
      const double bound = (ring - 1) * grid.h;
      if (ring > 0 && bound > 0 && bound * bound > best_d2) break;
      const int x0 = qc[0] - ring, x1 = qc[0] + ring;
      const int y0 = qc[1] - ring, y1 = qc[1] + ring;
      const int z0 = qc[2] - ring, z1 = qc[2] + ring;
      for (int x = x0; x <= x1; ++x) {
        if (x < 0 || x >= grid.nx) continue;
        for (int y = y0; y <= y1; ++y) {
          if (y < 0 || y >= grid.ny) continue;
          for (int z = z0; z <= z1; ++z) {
            if (z < 0 || z >= grid.nz) continue;
            // shell only: skip interior cells already scanned
            if (ring > 0 && x != x0 && x != x1 && y != y0 && y != y1 && z != z0 && z != z1) continue;
            const auto it = grid.cells.find(grid.key(x, y, z));
            if (it == grid.cells.end()) continue;
            for (int ti : it->second) {
              const double d2 = (targets[static_cast<std::size_t>(ti)] - q).squaredNorm();
              if (d2 < best_d2 || (d2 == best_d2 && ti < best)) {
                best_d2 = d2;
                best = ti;
              }
            }
          }
        }
      }
      if (best >= 0 && ring >= max_ring) break;
    }
    out[qi] = best;
  }
  return out;
}

double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer_distance: empty point cloud");
  const auto na = nearest_indices(a, b);
  const auto nb = nearest_indices(b, a);
  double da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) da += (a[i] - b[static_cast<std::size_t>(na[i])]).squaredNorm();
  for (std::size_t i = 0; i < b.size(); ++i) db += (b[i] - a[static_cast<std::size_t>(nb[i])]).squaredNorm();
  return da / static_cast<double>(a.size()) + db / static_cast<double>(b.size());
}

double symmetry_loss_plain(const TriMesh& mesh, const SymmetrySpec& spec, int m, int k,
                           std::uint64_t seed) {
  const auto rots = symmetry_transforms(spec, k);
  const auto base = sample_surface(mesh, m, seed);
  const auto ref = sample_surface(mesh, m, seed ^ 0x5eed5eedULL);
  std::vector<Vec3> cloud;
  cloud.reserve(base.size() * rots.size());
  for (const auto& rot : rots) {
    for (const auto& p : base) cloud.push_back(rot * p);
  }
  return chamfer_distance(cloud, ref);
}

}  // namespace csepose::geom

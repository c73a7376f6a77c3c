#include "csepose/geom/raycast.hpp"

#include <algorithm>
#include <numeric>

namespace csepose::geom {

std::optional<RayHit> ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                   const Vec3& c, double t_min) {
  // small barycentric tolerance so rays through shared vertices/edges cannot
  // thread between adjacent faces
  constexpr double kEdgeEps = 1e-9;
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 h = dir.cross(e2);
  const double det = e1.dot(h);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(h) * inv;
  if (u < -kEdgeEps || u > 1.0 + kEdgeEps) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < -kEdgeEps || u + v > 1.0 + kEdgeEps) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= t_min) return std::nullopt;
  RayHit hit;
  hit.t = t;
  hit.u = u;
  hit.v = v;
  hit.point = origin + t * dir;
  return hit;
}

MeshBvh::MeshBvh(const std::vector<Vec3>& vertices, const std::vector<std::array<int, 3>>& faces)
    : verts_(vertices), faces_(faces) {
  order_.resize(faces.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!faces.empty()) build(0, static_cast<int>(faces.size()), 0);
}

int MeshBvh::build(int begin, int end, int depth) {
  Node node;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (int i = begin; i < end; ++i) {
    const auto& f = faces_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
    for (int k = 0; k < 3; ++k) {
      node.lo = node.lo.cwiseMin(verts_[static_cast<std::size_t>(f[k])]);
      node.hi = node.hi.cwiseMax(verts_[static_cast<std::size_t>(f[k])]);
    }
  }
  const int idx = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= 4 || depth > 32) {
    nodes_[static_cast<std::size_t>(idx)].begin = begin;
    nodes_[static_cast<std::size_t>(idx)].end = end;
    return idx;
  }
  int axis = 0;
  const Vec3 ext = node.hi - node.lo;
  if (ext.y() > ext.x()) axis = 1;
  if (ext.z() > ext[axis]) axis = 2;
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int fa, int fb) {
                     const auto& A = faces_[static_cast<std::size_t>(fa)];
                     const auto& B = faces_[static_cast<std::size_t>(fb)];
                     const double ca = verts_[static_cast<std::size_t>(A[0])][axis] +
                                       verts_[static_cast<std::size_t>(A[1])][axis] +
                                       verts_[static_cast<std::size_t>(A[2])][axis];
                     const double cb = verts_[static_cast<std::size_t>(B[0])][axis] +
                                       verts_[static_cast<std::size_t>(B[1])][axis] +
                                       verts_[static_cast<std::size_t>(B[2])][axis];
                     if (ca != cb) return ca < cb;
                     return fa < fb;
                   });
  const int l = build(begin, mid, depth + 1);
  const int r = build(mid, end, depth + 1);
  nodes_[static_cast<std::size_t>(idx)].left = l;
  nodes_[static_cast<std::size_t>(idx)].right = r;
  return idx;
}

namespace {

// Slab test; returns entry distance (or -inf when inside) and whether hit.
bool box_hit(const Vec3& lo, const Vec3& hi, const Vec3& o, const Vec3& inv_d, double t_cap,
             double* t_enter) {
  double t0 = 0.0, t1 = t_cap;
  for (int a = 0; a < 3; ++a) {
    const double ta = (lo[a] - o[a]) * inv_d[a];
    const double tb = (hi[a] - o[a]) * inv_d[a];
    const double tmin = std::min(ta, tb);
    const double tmax = std::max(ta, tb);
    t0 = std::max(t0, tmin);
    t1 = std::min(t1, tmax);
    if (t0 > t1) return false;
  }
  *t_enter = t0;
  return true;
}

}  // namespace

std::optional<RayHit> MeshBvh::nearest_hit(const Vec3& origin, const Vec3& dir, double t_min) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv_d(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
  RayHit best;
  best.t = std::numeric_limits<double>::infinity();
  bool found = false;

  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int ni = stack.back();
    stack.pop_back();
    const Node& node = nodes_[static_cast<std::size_t>(ni)];
    double t_enter = 0;
    // strict > keeps equal-t candidates visitable for the face-index tie rule
    if (!box_hit(node.lo, node.hi, origin, inv_d, std::numeric_limits<double>::infinity(), &t_enter) ||
        t_enter > best.t) {
      continue;
    }
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int fi = order_[static_cast<std::size_t>(i)];
        const auto& f = faces_[static_cast<std::size_t>(fi)];
        auto hit = ray_triangle(origin, dir, verts_[static_cast<std::size_t>(f[0])],
                                verts_[static_cast<std::size_t>(f[1])],
                                verts_[static_cast<std::size_t>(f[2])], t_min);
        if (!hit) continue;
        if (hit->t < best.t || (hit->t == best.t && fi < best.face)) {
          best = *hit;
          best.face = fi;
          found = true;
        }
      }
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  if (!found) return std::nullopt;
  return best;
}

bool MeshBvh::any_hit_before(const Vec3& origin, const Vec3& dir, double t_max, double t_min) const {
  if (nodes_.empty()) return false;
  const Vec3 inv_d(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int ni = stack.back();
    stack.pop_back();
    const Node& node = nodes_[static_cast<std::size_t>(ni)];
    double t_enter = 0;
    if (!box_hit(node.lo, node.hi, origin, inv_d, t_max, &t_enter)) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int fi = order_[static_cast<std::size_t>(i)];
        const auto& f = faces_[static_cast<std::size_t>(fi)];
        auto hit = ray_triangle(origin, dir, verts_[static_cast<std::size_t>(f[0])],
                                verts_[static_cast<std::size_t>(f[1])],
                                verts_[static_cast<std::size_t>(f[2])], t_min);
        if (hit && hit->t < t_max) return true;
      }
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  return false;
}

std::optional<RayHit> inverse_project(const Camera& cam, const ScaledPose& pose, const TriMesh& mesh,
                                      const MeshBvh& canonical_bvh, double px, double py) {
  (void)mesh;
  if (!cam.inside(px, py)) throw std::invalid_argument("inverse_project: pixel outside the image");
  // Move the pixel ray into the canonical frame; t ordering is preserved.
  const Vec3 dir_scene = cam.ray_dir(px, py);
  const Vec3 o_can = pose.invert(Vec3::Zero());
  const Vec3 d_can = pose.rigid.rotation.transpose() * dir_scene / pose.scale;
  return canonical_bvh.nearest_hit(o_can, d_can);
}

std::vector<std::uint8_t> vertex_visibility(const TriMesh& mesh, const ScaledPose& pose,
                                            const Camera& cam) {
  (void)cam;
  constexpr double kDepthSlack = 1e-5;
  const int n = mesh.vertex_count();
  std::vector<Vec3> scene(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) scene[static_cast<std::size_t>(i)] = pose.apply(mesh.vertices[static_cast<std::size_t>(i)]);
  MeshBvh bvh(scene, mesh.faces);
  std::vector<std::uint8_t> vis(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const Vec3& v = scene[static_cast<std::size_t>(i)];
    if (v.z() <= 0) continue;  // behind the camera
    // Ray to the vertex with t in [0,1]; occluded iff some face is strictly
    // closer than the vertex (slack absorbs hits on the vertex's own faces).
    vis[static_cast<std::size_t>(i)] =
        bvh.any_hit_before(Vec3::Zero(), v, 1.0 - kDepthSlack / v.norm(), 1e-9) ? 0 : 1;
  }
  return vis;
}

}  // namespace csepose::geom

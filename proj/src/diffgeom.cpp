#include "csepose/geom/diffgeom.hpp"

namespace csepose::geom {

using namespace csepose::diff;

Var rotation_from_6d(Var r6) {
  Tape& t = *r6.tape;
  if (t.value(r6).numel() != 6) {
    throw std::invalid_argument("rotation_from_6d: expects a 6-vector");
  }
  Var ab = reshape(r6, {2, 3});
  Var a1 = slice_rows(ab, 0, 1);
  Var a2 = slice_rows(ab, 1, 2);
  Var n1 = l2_norm(a1);
  if (t.value(n1)[0] < 1e-12) {
    throw std::invalid_argument("rotation_from_6d: first triple is (near) zero, |a1| = " +
                                std::to_string(t.value(n1)[0]));
  }
  Var b1 = div(a1, n1);
  Var d = sum(mul(a2, b1));
  Var res = sub(a2, mul(b1, d));
  Var n2 = l2_norm(res);
  const double a2_norm = std::sqrt(t.value(sqnorm_rows(a2))[0]);
  if (t.value(n2)[0] < 1e-9 * std::max(1.0, a2_norm)) {
    throw std::invalid_argument("rotation_from_6d: degenerate (parallel) input, residual " +
                                std::to_string(t.value(n2)[0]) + " vs |a2| " + std::to_string(a2_norm));
  }
  Var b2 = div(res, n2);
  Var b3 = cross_rows(b1, b2);
  return transpose(concat({b1, b2, b3}, 0));
}

Var transform_points(Var rotation, Var translation, Var points, double s) {
  Var p = s == 1.0 ? points : scale(points, s);
  return add(matmul(p, transpose(rotation)), reshape(translation, {1, 3}));
}

ProjectedVar project_camera_points(const Camera& cam, Var cam_points) {
  Var tp = transpose(cam_points);  // [3,K]
  Var x = slice_rows(tp, 0, 1);
  Var y = slice_rows(tp, 1, 2);
  Var z = slice_rows(tp, 2, 3);
  Var px = affine(div(x, z), cam.fx, cam.cx);
  Var py = affine(div(y, z), cam.fy, cam.cy);
  ProjectedVar out;
  out.pixels = transpose(concat({px, py}, 0));
  out.depths = transpose(z);
  return out;
}

ProjectedVar project_points(const Camera& cam, Var rotation, Var translation, Var points) {
  return project_camera_points(cam, transform_points(rotation, translation, points));
}

Var laplacian_term(Var verts, Var laplacian_const) {
  return mean(sqnorm_rows(matmul(laplacian_const, verts)));
}

namespace {

class ChamferOp final : public OpNode {
 public:
  std::string_view kind() const override { return "chamfer"; }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    const NdArray& b = *in[1];
    if (a.rank() != 2 || a.shape[1] != 3 || b.rank() != 2 || b.shape[1] != 3) {
      throw std::invalid_argument("chamfer: expects [k,3] point arrays");
    }
    if (a.shape[0] == 0 || b.shape[0] == 0) throw std::invalid_argument("chamfer: empty point cloud");
    const auto av = array_to_vertices(a);
    const auto bv = array_to_vertices(b);
    nn_ab_ = nearest_indices(av, bv);
    nn_ba_ = nearest_indices(bv, av);
    double da = 0, db = 0;
    for (std::size_t i = 0; i < av.size(); ++i) {
      da += (av[i] - bv[static_cast<std::size_t>(nn_ab_[i])]).squaredNorm();
    }
    for (std::size_t i = 0; i < bv.size(); ++i) {
      db += (bv[i] - av[static_cast<std::size_t>(nn_ba_[i])]).squaredNorm();
    }
    return NdArray::scalar(da / static_cast<double>(av.size()) + db / static_cast<double>(bv.size()));
  }

  void grad(std::span<const NdArray* const> in, const NdArray&, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    const NdArray& a = *in[0];
    const NdArray& b = *in[1];
    const double g = gout[0];
    const double wa = 2.0 * g / static_cast<double>(a.shape[0]);
    const double wb = 2.0 * g / static_cast<double>(b.shape[0]);
    auto accumulate = [](NdArray* dst_a, NdArray* dst_b, const NdArray& pa, const NdArray& pb,
                         const std::vector<int>& nn, double w) {
      for (std::int64_t i = 0; i < pa.shape[0]; ++i) {
        const std::int64_t j = nn[static_cast<std::size_t>(i)];
        for (int c = 0; c < 3; ++c) {
          const double diff = pa[3 * i + c] - pb[3 * j + c];
          if (dst_a) (*dst_a)[3 * i + c] += w * diff;
          if (dst_b) (*dst_b)[3 * j + c] -= w * diff;
        }
      }
    };
    accumulate(gin[0], gin[1], a, b, nn_ab_, wa);
    accumulate(gin[1], gin[0], b, a, nn_ba_, wb);
  }

 private:
  std::vector<int> nn_ab_, nn_ba_;
};

}  // namespace

Var chamfer(Var a, Var b) { return a.tape->apply(std::make_unique<ChamferOp>(), {a, b}); }

Var surface_points_var(Var verts, const std::vector<std::array<int, 3>>& faces,
                       const std::vector<SurfaceSample>& params) {
  const auto m = static_cast<std::int64_t>(params.size());
  std::vector<std::int64_t> ia(params.size()), ib(params.size()), ic(params.size());
  NdArray wa = NdArray::zeros({m, 1}), wb = NdArray::zeros({m, 1}), wc = NdArray::zeros({m, 1});
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto& f = faces[static_cast<std::size_t>(p.face)];
    ia[i] = f[0];
    ib[i] = f[1];
    ic[i] = f[2];
    wa[static_cast<std::int64_t>(i)] = 1.0 - p.u - p.v;
    wb[static_cast<std::int64_t>(i)] = p.u;
    wc[static_cast<std::int64_t>(i)] = p.v;
  }
  Tape& t = *verts.tape;
  Var pa = mul(gather_rows(verts, std::move(ia)), t.constant(std::move(wa)));
  Var pb = mul(gather_rows(verts, std::move(ib)), t.constant(std::move(wb)));
  Var pc = mul(gather_rows(verts, std::move(ic)), t.constant(std::move(wc)));
  return add(add(pa, pb), pc);
}

Var symmetry_loss(Var verts, const std::vector<std::array<int, 3>>& faces,
                  const std::vector<Vec3>& current_verts, const SymmetrySpec& spec, int m, int k,
                  std::uint64_t seed) {
  TriMesh snapshot;
  snapshot.vertices = current_verts;
  snapshot.faces = faces;
  const auto base_params = sample_surface_params(snapshot, m, seed);
  const auto ref_params = sample_surface_params(snapshot, m, seed ^ 0x5eed5eedULL);
  Tape& t = *verts.tape;

  Var base = surface_points_var(verts, faces, base_params);
  const auto rots = symmetry_transforms(spec, k);
  std::vector<Var> parts;
  parts.reserve(rots.size());
  for (const auto& rot : rots) {
    NdArray rt = NdArray::zeros({3, 3});
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) rt[r * 3 + c] = rot(c, r);  // transposed for row-vector points
    }
    parts.push_back(matmul(base, t.constant(std::move(rt))));
  }
  Var cloud = parts.size() == 1 ? parts[0] : concat(parts, 0);
  Var ref = surface_points_var(verts, faces, ref_params);
  return chamfer(cloud, ref);
}

Var raycast_points_on_tape(const Camera& cam, Var pixels, Var rotation, Var translation, Var verts,
                           const std::vector<std::array<int, 3>>& faces,
                           const std::vector<int>& hit_faces, double s) {
  Tape& t = *pixels.tape;
  const auto k = static_cast<std::int64_t>(hit_faces.size());
  if (t.value(pixels).shape != Shape{k, 2}) {
    throw std::invalid_argument("raycast_points_on_tape: pixels must be [k,2] matching hit_faces");
  }
  std::vector<std::int64_t> ia(hit_faces.size()), ib(hit_faces.size()), ic(hit_faces.size());
  for (std::size_t i = 0; i < hit_faces.size(); ++i) {
    const auto& f = faces[static_cast<std::size_t>(hit_faces[i])];
    ia[i] = f[0];
    ib[i] = f[1];
    ic[i] = f[2];
  }
  Var scene = transform_points(rotation, translation, verts, s);
  Var a_s = gather_rows(scene, ia);
  Var b_s = gather_rows(scene, ib);
  Var c_s = gather_rows(scene, ic);
  Var a_c = gather_rows(verts, std::move(ia));
  Var b_c = gather_rows(verts, std::move(ib));
  Var c_c = gather_rows(verts, std::move(ic));

  // ray directions through the pixels (camera at the origin)
  Var pt = transpose(pixels);  // [2,k]
  Var dx = affine(slice_rows(pt, 0, 1), 1.0 / cam.fx, -cam.cx / cam.fx);
  Var dy = affine(slice_rows(pt, 1, 2), 1.0 / cam.fy, -cam.cy / cam.fy);
  Var dz = t.constant(NdArray::full({1, k}, 1.0));
  Var dir = transpose(concat({dx, dy, dz}, 0));  // [k,3]

  // Moller-Trumbore with origin 0: the barycentrics are frame independent,
  // so solve in the scene frame and blend the canonical vertices.
  Var e1 = sub(b_s, a_s);
  Var e2 = sub(c_s, a_s);
  Var h = cross_rows(dir, e2);
  Var det = dot_rows(e1, h);            // [k,1]
  Var sv = neg(a_s);                    // origin - A
  Var u = div(dot_rows(sv, h), det);
  Var q = cross_rows(sv, e1);
  Var v = div(dot_rows(dir, q), det);
  Var w = affine(add(u, v), -1.0, 1.0);  // 1 - u - v
  return add(add(mul(a_c, w), mul(b_c, u)), mul(c_c, v));
}

}  // namespace csepose::geom

#include "csepose/render/raster.hpp"

#include <cmath>

namespace csepose::render {

namespace {

constexpr double kInfluenceCut = 40.0;  // skip exterior face-pixel pairs with d^2/sigma beyond this
constexpr double kMinDepth = 1e-6;

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
double sigmoid_stable(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

// Point-segment squared distance with the clamped parameter; gradient wrt the
// endpoints is -2(1-t) r and -2 t r with r = q - closest.
struct SegDist {
  double d2 = 0, t = 0;
  double rx = 0, ry = 0;
};
SegDist seg_dist(double qx, double qy, double ax, double ay, double bx, double by) {
  const double ux = bx - ax, uy = by - ay;
  const double wx = qx - ax, wy = qy - ay;
  const double uu = ux * ux + uy * uy;
  SegDist out;
  out.t = uu > 0 ? std::clamp((wx * ux + wy * uy) / uu, 0.0, 1.0) : 0.0;
  out.rx = wx - out.t * ux;
  out.ry = wy - out.t * uy;
  out.d2 = out.rx * out.rx + out.ry * out.ry;
  return out;
}

struct FaceScreen {
  // projected vertex positions and camera depths
  double px[3], py[3], z[3];
  int vid[3];
  double area = 0;  // signed; front-facing faces are negative in y-down image coords
  bool active = false;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

struct PixelAgg {
  double log_free = 0;  // sum of log(1 - D_j); mask = 1 - exp(log_free)
  double z_min = std::numeric_limits<double>::infinity();
  int face_min = -1;
  double den = 0;
  double num_rgb[3] = {0, 0, 0};
  double num_depth = 0;
};

class Rasterizer {
 public:
  Rasterizer(const double* verts, std::int64_t n_verts, const std::vector<std::array<int, 3>>& faces,
             const double* colors, const Camera& cam, const RasterSettings& st)
      : verts_(verts), n_verts_(n_verts), faces_(faces), colors_(colors), cam_(cam), st_(st) {
    st_.validate();
    cam_.validate();
    margin_ = std::sqrt(kInfluenceCut * st_.sigma);
    project_faces();
    agg_.assign(static_cast<std::size_t>(cam_.height) * cam_.width, PixelAgg{});
  }

  void forward() {
    // pass 1: soft coverage and the per-pixel nearest covering face
    for (std::size_t f = 0; f < screen_.size(); ++f) pass_coverage(static_cast<int>(f));
    // pass 2: depth-softmax aggregation over covering faces
    for (std::size_t f = 0; f < screen_.size(); ++f) pass_aggregate(static_cast<int>(f));
  }

  // d(L)/d(verts [N,3]) and d(L)/d(colors [N,3]) from raster grads.
  void backward(const double* g_rgb, const double* g_mask, const double* g_depth, double* d_verts,
                double* d_colors) {
    // per-pixel upstream gradients combined once
    const std::int64_t hw = static_cast<std::int64_t>(cam_.height) * cam_.width;
    g_total_mask_.assign(static_cast<std::size_t>(hw), 0.0);
    g_cover_rgb_.assign(static_cast<std::size_t>(hw) * 3, 0.0);
    g_zmin_.assign(static_cast<std::size_t>(hw), 0.0);
    for (std::int64_t p = 0; p < hw; ++p) {
      const PixelAgg& a = agg_[static_cast<std::size_t>(p)];
      double gm = g_mask ? g_mask[p] : 0.0;
      if (a.face_min >= 0 && g_rgb) {
        const double m = 1.0 - std::exp(a.log_free);
        for (int c = 0; c < 3; ++c) {
          const double cover_c = a.num_rgb[c] / a.den;
          gm += g_rgb[3 * p + c] * (cover_c - st_.background[c]);
          g_cover_rgb_[static_cast<std::size_t>(3 * p + c)] = g_rgb[3 * p + c] * m;
        }
      }
      g_total_mask_[static_cast<std::size_t>(p)] = gm;
    }
    d_verts_ = d_verts;
    d_colors_ = d_colors;
    for (std::size_t f = 0; f < screen_.size(); ++f) back_face(static_cast<int>(f), g_depth);
    // z_min gradients route through the nearest covering face of each pixel
    for (std::int64_t p = 0; p < hw; ++p) {
      const PixelAgg& a = agg_[static_cast<std::size_t>(p)];
      if (a.face_min < 0 || g_zmin_[static_cast<std::size_t>(p)] == 0.0) continue;
      back_zmin(a.face_min, p, g_zmin_[static_cast<std::size_t>(p)]);
    }
  }

  RenderOutput collect() const {
    RenderOutput out;
    out.height = cam_.height;
    out.width = cam_.width;
    out.rgb = diff::NdArray::zeros({cam_.height, cam_.width, 3});
    out.mask = diff::NdArray::zeros({cam_.height, cam_.width});
    out.depth = diff::NdArray::zeros({cam_.height, cam_.width});
    const std::int64_t hw = static_cast<std::int64_t>(cam_.height) * cam_.width;
    out.covered.assign(static_cast<std::size_t>(hw), 0);
    out.z_near.assign(static_cast<std::size_t>(hw), 0.0);
    out.face_near.assign(static_cast<std::size_t>(hw), -1);
    for (std::int64_t p = 0; p < hw; ++p) {
      const PixelAgg& a = agg_[static_cast<std::size_t>(p)];
      const double m = 1.0 - std::exp(a.log_free);
      out.mask[p] = m;
      for (int c = 0; c < 3; ++c) out.rgb[3 * p + c] = st_.background[c];
      if (a.face_min >= 0) {
        out.covered[static_cast<std::size_t>(p)] = 1;
        out.z_near[static_cast<std::size_t>(p)] = a.z_min;
        out.face_near[static_cast<std::size_t>(p)] = a.face_min;
        out.depth[p] = a.num_depth / a.den;
        for (int c = 0; c < 3; ++c) {
          out.rgb[3 * p + c] = m * (a.num_rgb[c] / a.den) + (1.0 - m) * st_.background[c];
        }
      }
    }
    return out;
  }

  // packed [h*w, 5]: rgb, mask, depth per pixel (tape output layout)
  diff::NdArray collect_packed() const {
    const std::int64_t hw = static_cast<std::int64_t>(cam_.height) * cam_.width;
    diff::NdArray out = diff::NdArray::zeros({hw, 5});
    for (std::int64_t p = 0; p < hw; ++p) {
      const PixelAgg& a = agg_[static_cast<std::size_t>(p)];
      const double m = 1.0 - std::exp(a.log_free);
      double rgb[3] = {st_.background[0], st_.background[1], st_.background[2]};
      double depth = 0;
      if (a.face_min >= 0) {
        depth = a.num_depth / a.den;
        for (int c = 0; c < 3; ++c) {
          rgb[c] = m * (a.num_rgb[c] / a.den) + (1.0 - m) * st_.background[c];
        }
      }
      out[5 * p + 0] = rgb[0];
      out[5 * p + 1] = rgb[1];
      out[5 * p + 2] = rgb[2];
      out[5 * p + 3] = m;
      out[5 * p + 4] = depth;
    }
    return out;
  }

 private:
  void project_faces() {
    proj_.assign(static_cast<std::size_t>(n_verts_) * 2, 0.0);
    for (std::int64_t v = 0; v < n_verts_; ++v) {
      const double z = verts_[3 * v + 2];
      if (z <= kMinDepth) {
        throw std::invalid_argument("soft_rasterize: vertex " + std::to_string(v) +
                                    " is behind the camera (z = " + std::to_string(z) + ")");
      }
      proj_[static_cast<std::size_t>(2 * v)] = cam_.fx * verts_[3 * v] / z + cam_.cx;
      proj_[static_cast<std::size_t>(2 * v + 1)] = cam_.fy * verts_[3 * v + 1] / z + cam_.cy;
    }
    screen_.resize(faces_.size());
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      FaceScreen& fs = screen_[f];
      double lox = 1e30, hix = -1e30, loy = 1e30, hiy = -1e30;
      for (int k = 0; k < 3; ++k) {
        const int vid = faces_[f][static_cast<std::size_t>(k)];
        fs.vid[k] = vid;
        fs.px[k] = proj_[static_cast<std::size_t>(2 * vid)];
        fs.py[k] = proj_[static_cast<std::size_t>(2 * vid + 1)];
        fs.z[k] = verts_[3 * vid + 2];
        lox = std::min(lox, fs.px[k]);
        hix = std::max(hix, fs.px[k]);
        loy = std::min(loy, fs.py[k]);
        hiy = std::max(hiy, fs.py[k]);
      }
      fs.area = cross2(fs.px[1] - fs.px[0], fs.py[1] - fs.py[0], fs.px[2] - fs.px[0], fs.py[2] - fs.py[0]);
      // backface culling: outward-wound faces project with negative signed
      // area when they face the camera (image y points down)
      fs.active = fs.area < 0;
      fs.x0 = std::max(0, static_cast<int>(std::floor(lox - margin_)));
      fs.x1 = std::min(cam_.width - 1, static_cast<int>(std::ceil(hix + margin_)));
      fs.y0 = std::max(0, static_cast<int>(std::floor(loy - margin_)));
      fs.y1 = std::min(cam_.height - 1, static_cast<int>(std::ceil(hiy + margin_)));
    }
  }

  // delta, boundary distance and (for covered pixels) barycentrics at q
  struct Sample {
    bool inside = false;
    double d2 = 0;
    int edge = 0;      // argmin boundary edge k: segment (k, (k+1)%3)
    SegDist seg;
    double lam[3] = {0, 0, 0};
    double z = 0;
  };

  Sample eval_face(const FaceScreen& fs, double qx, double qy) const {
    Sample s;
    double n0 = cross2(fs.px[1] - qx, fs.py[1] - qy, fs.px[2] - qx, fs.py[2] - qy);
    double n1 = cross2(fs.px[2] - qx, fs.py[2] - qy, fs.px[0] - qx, fs.py[0] - qy);
    double n2 = cross2(fs.px[0] - qx, fs.py[0] - qy, fs.px[1] - qx, fs.py[1] - qy);
    if (fs.area != 0.0) {
      const double sgn = fs.area > 0 ? 1.0 : -1.0;
      s.inside = (sgn * n0 >= 0) && (sgn * n1 >= 0) && (sgn * n2 >= 0);
    }
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      const int k2 = (k + 1) % 3;
      const SegDist sd = seg_dist(qx, qy, fs.px[k], fs.py[k], fs.px[k2], fs.py[k2]);
      if (sd.d2 < best) {
        best = sd.d2;
        s.edge = k;
        s.seg = sd;
      }
    }
    s.d2 = best;
    if (s.inside) {
      s.lam[0] = n0 / fs.area;
      s.lam[1] = n1 / fs.area;
      s.lam[2] = n2 / fs.area;
      s.z = s.lam[0] * fs.z[0] + s.lam[1] * fs.z[1] + s.lam[2] * fs.z[2];
    }
    return s;
  }

  void pass_coverage(int f) {
    const FaceScreen& fs = screen_[static_cast<std::size_t>(f)];
    if (!fs.active) return;
    for (int y = fs.y0; y <= fs.y1; ++y) {
      for (int x = fs.x0; x <= fs.x1; ++x) {
        const Sample s = eval_face(fs, x + 0.5, y + 0.5);
        const double arg = (s.inside ? 1.0 : -1.0) * s.d2 / st_.sigma;
        if (!s.inside && arg < -kInfluenceCut) continue;
        PixelAgg& a = agg_[static_cast<std::size_t>(y) * cam_.width + x];
        a.log_free -= softplus(arg);  // log(1 - sigmoid(arg))
        if (s.inside && s.z > 0) {
          if (s.z < a.z_min || (s.z == a.z_min && f < a.face_min)) {
            a.z_min = s.z;
            a.face_min = f;
          }
        }
      }
    }
  }

  void pass_aggregate(int f) {
    const FaceScreen& fs = screen_[static_cast<std::size_t>(f)];
    if (!fs.active) return;
    for (int y = fs.y0; y <= fs.y1; ++y) {
      for (int x = fs.x0; x <= fs.x1; ++x) {
        const Sample s = eval_face(fs, x + 0.5, y + 0.5);
        if (!s.inside || s.z <= 0) continue;
        PixelAgg& a = agg_[static_cast<std::size_t>(y) * cam_.width + x];
        const double raw = std::exp((a.z_min / s.z - 1.0) / st_.gamma);
        a.den += raw;
        a.num_depth += raw * s.z;
        for (int c = 0; c < 3; ++c) {
          double col = 0;
          for (int k = 0; k < 3; ++k) col += s.lam[k] * colors_[3 * fs.vid[k] + c];
          a.num_rgb[c] += raw * col;
        }
      }
    }
  }

  // accumulate gradient into a projected vertex position (chain to 3d)
  void add_proj_grad(int vid, double gx, double gy) {
    const double z = verts_[3 * vid + 2];
    d_verts_[3 * vid + 0] += gx * cam_.fx / z;
    d_verts_[3 * vid + 1] += gy * cam_.fy / z;
    d_verts_[3 * vid + 2] +=
        -(gx * cam_.fx * verts_[3 * vid] + gy * cam_.fy * verts_[3 * vid + 1]) / (z * z);
  }

  void back_face(int f, const double* g_depth) {
    const FaceScreen& fs = screen_[static_cast<std::size_t>(f)];
    if (!fs.active) return;
    for (int y = fs.y0; y <= fs.y1; ++y) {
      for (int x = fs.x0; x <= fs.x1; ++x) {
        const double qx = x + 0.5, qy = y + 0.5;
        const Sample s = eval_face(fs, qx, qy);
        const double delta = s.inside ? 1.0 : -1.0;
        const double arg = delta * s.d2 / st_.sigma;
        if (!s.inside && arg < -kInfluenceCut) continue;
        const std::int64_t p = static_cast<std::int64_t>(y) * cam_.width + x;
        const PixelAgg& a = agg_[static_cast<std::size_t>(p)];

        // mask path: d(mask)/d(arg) = (1-mask) * sigmoid(arg)
        const double gm = g_total_mask_[static_cast<std::size_t>(p)];
        if (gm != 0.0) {
          const double g_arg = gm * std::exp(a.log_free) * sigmoid_stable(arg);
          const double g_d2 = g_arg * delta / st_.sigma;
          if (g_d2 != 0.0) {
            // d(d^2)/d endpoints of the nearest boundary edge
            const int k = s.edge, k2 = (k + 1) % 3;
            const double t = s.seg.t;
            add_proj_grad(fs.vid[k], g_d2 * (-2.0) * (1.0 - t) * s.seg.rx,
                          g_d2 * (-2.0) * (1.0 - t) * s.seg.ry);
            add_proj_grad(fs.vid[k2], g_d2 * (-2.0) * t * s.seg.rx, g_d2 * (-2.0) * t * s.seg.ry);
          }
        }

        // aggregation path for covering faces
        if (!s.inside || s.z <= 0 || a.face_min < 0) continue;
        const double raw = std::exp((a.z_min / s.z - 1.0) / st_.gamma);
        const double aj = raw / a.den;
        if (aj < 1e-300) continue;
        const double cover_rgb[3] = {a.num_rgb[0] / a.den, a.num_rgb[1] / a.den, a.num_rgb[2] / a.den};
        const double depth_soft = a.num_depth / a.den;
        const double* gc = g_cover_rgb_.data() + 3 * p;
        const double gd = g_depth ? g_depth[p] : 0.0;

        double col[3] = {0, 0, 0};
        for (int c = 0; c < 3; ++c) {
          for (int k = 0; k < 3; ++k) col[c] += s.lam[k] * colors_[3 * fs.vid[k] + c];
        }
        // softmax weight gradient wrt f_j = (z_min / z_j) / gamma
        double g_fj = 0;
        for (int c = 0; c < 3; ++c) g_fj += gc[c] * (col[c] - cover_rgb[c]);
        g_fj += gd * (s.z - depth_soft);
        g_fj *= aj;

        // z_j: direct depth term plus the softmax exponent
        double g_zj = gd * aj;
        g_zj += g_fj * (-a.z_min / (st_.gamma * s.z * s.z));
        g_zmin_[static_cast<std::size_t>(p)] += g_fj / (st_.gamma * s.z);

        // vertex colors and interpolated color/z to barycentrics
        double g_lam[3] = {0, 0, 0};
        for (int k = 0; k < 3; ++k) {
          for (int c = 0; c < 3; ++c) {
            d_colors_[3 * fs.vid[k] + c] += gc[c] * aj * s.lam[k];
            g_lam[k] += gc[c] * aj * colors_[3 * fs.vid[k] + c];
          }
          g_lam[k] += g_zj * fs.z[k];
          d_verts_[3 * fs.vid[k] + 2] += g_zj * s.lam[k];  // z enters camera-frame directly
        }
        back_barycentric(fs, qx, qy, s, g_lam);
      }
    }
  }

  // gradients of screen barycentrics wrt the three projected positions
  void back_barycentric(const FaceScreen& fs, double qx, double qy, const Sample& s,
                        const double g_lam[3]) {
    const double inv_area = 1.0 / fs.area;
    // numerators n_k and their derivatives; lambda_k = n_k / A
    // dA/dp terms
    const double ux = fs.px[1] - fs.px[0], uy = fs.py[1] - fs.py[0];
    const double vx = fs.px[2] - fs.px[0], vy = fs.py[2] - fs.py[0];
    const double dA[3][2] = {{uy - vy, vx - ux}, {vy, -vx}, {-uy, ux}};
    // dn_k/dp_j: n_k = cross2(p_{k+1}-q, p_{k+2}-q)
    double gpx[3] = {0, 0, 0}, gpy[3] = {0, 0, 0};
    for (int k = 0; k < 3; ++k) {
      if (g_lam[k] == 0.0) continue;
      const int i1 = (k + 1) % 3, i2 = (k + 2) % 3;
      const double ax = fs.px[i1] - qx, ay = fs.py[i1] - qy;
      const double bx = fs.px[i2] - qx, by = fs.py[i2] - qy;
      // d n_k / d p_i1 = (b_y, -b_x); d n_k / d p_i2 = (-a_y, a_x)
      const double w = g_lam[k] * inv_area;
      gpx[i1] += w * by;
      gpy[i1] += w * (-bx);
      gpx[i2] += w * (-ay);
      gpy[i2] += w * ax;
      // -(n_k / A^2) dA = -(lam_k / A) dA
      const double w2 = -g_lam[k] * s.lam[k] * inv_area;
      for (int j = 0; j < 3; ++j) {
        gpx[j] += w2 * dA[j][0];
        gpy[j] += w2 * dA[j][1];
      }
    }
    for (int k = 0; k < 3; ++k) {
      if (gpx[k] != 0.0 || gpy[k] != 0.0) add_proj_grad(fs.vid[k], gpx[k], gpy[k]);
    }
  }

  void back_zmin(int f, std::int64_t p, double g) {
    const FaceScreen& fs = screen_[static_cast<std::size_t>(f)];
    const int x = static_cast<int>(p % cam_.width);
    const int y = static_cast<int>(p / cam_.width);
    const Sample s = eval_face(fs, x + 0.5, y + 0.5);
    double g_lam[3];
    for (int k = 0; k < 3; ++k) {
      g_lam[k] = g * fs.z[k];
      d_verts_[3 * fs.vid[k] + 2] += g * s.lam[k];
    }
    back_barycentric(fs, x + 0.5, y + 0.5, s, g_lam);
  }

  const double* verts_;
  std::int64_t n_verts_;
  const std::vector<std::array<int, 3>>& faces_;
  const double* colors_;
  Camera cam_;
  RasterSettings st_;
  double margin_ = 0;
  std::vector<double> proj_;
  std::vector<FaceScreen> screen_;
  std::vector<PixelAgg> agg_;
  // backward scratch
  std::vector<double> g_total_mask_, g_cover_rgb_, g_zmin_;
  double* d_verts_ = nullptr;
  double* d_colors_ = nullptr;
};

class RasterizeOp final : public diff::OpNode {
 public:
  RasterizeOp(std::vector<std::array<int, 3>> faces, Camera cam, RasterSettings st)
      : faces_(std::move(faces)), cam_(cam), st_(st) {}

  std::string_view kind() const override { return "soft_rasterize"; }

  diff::NdArray run(std::span<const diff::NdArray* const> in) override {
    const diff::NdArray& verts = *in[0];
    const diff::NdArray& colors = *in[1];
    if (verts.rank() != 2 || verts.shape[1] != 3 || !colors.same_shape(verts)) {
      throw std::invalid_argument("soft_rasterize: expects matching [n,3] vertex and color arrays");
    }
    raster_ = std::make_unique<Rasterizer>(verts.data.data(), verts.shape[0], faces_,
                                           colors.data.data(), cam_, st_);
    raster_->forward();
    return raster_->collect_packed();
  }

  void grad(std::span<const diff::NdArray* const> in, const diff::NdArray&, const diff::NdArray& gout,
            std::span<diff::NdArray* const> gin) override {
    const std::int64_t hw = static_cast<std::int64_t>(cam_.height) * cam_.width;
    std::vector<double> g_rgb(static_cast<std::size_t>(hw) * 3), g_mask(static_cast<std::size_t>(hw)),
        g_depth(static_cast<std::size_t>(hw));
    for (std::int64_t p = 0; p < hw; ++p) {
      g_rgb[static_cast<std::size_t>(3 * p)] = gout[5 * p];
      g_rgb[static_cast<std::size_t>(3 * p + 1)] = gout[5 * p + 1];
      g_rgb[static_cast<std::size_t>(3 * p + 2)] = gout[5 * p + 2];
      g_mask[static_cast<std::size_t>(p)] = gout[5 * p + 3];
      g_depth[static_cast<std::size_t>(p)] = gout[5 * p + 4];
    }
    diff::NdArray dv = diff::NdArray::zeros(in[0]->shape);
    diff::NdArray dc = diff::NdArray::zeros(in[1]->shape);
    raster_->backward(g_rgb.data(), g_mask.data(), g_depth.data(), dv.data.data(), dc.data.data());
    if (gin[0]) {
      for (std::int64_t i = 0; i < dv.numel(); ++i) (*gin[0])[i] += dv[i];
    }
    if (gin[1]) {
      for (std::int64_t i = 0; i < dc.numel(); ++i) (*gin[1])[i] += dc[i];
    }
  }

 private:
  std::vector<std::array<int, 3>> faces_;
  Camera cam_;
  RasterSettings st_;
  std::unique_ptr<Rasterizer> raster_;
};

}  // namespace

RenderOutput soft_rasterize(const std::vector<Vec3>& verts_cam,
                            const std::vector<std::array<int, 3>>& faces,
                            const std::vector<Vec3>& vertex_colors, const Camera& cam,
                            const RasterSettings& settings) {
  if (vertex_colors.size() != verts_cam.size()) {
    throw std::invalid_argument("soft_rasterize: one color per vertex required");
  }
  std::vector<double> v(verts_cam.size() * 3), c(verts_cam.size() * 3);
  for (std::size_t i = 0; i < verts_cam.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      v[3 * i + static_cast<std::size_t>(k)] = verts_cam[i][k];
      c[3 * i + static_cast<std::size_t>(k)] = vertex_colors[i][k];
    }
  }
  Rasterizer r(v.data(), static_cast<std::int64_t>(verts_cam.size()), faces, c.data(), cam, settings);
  r.forward();
  return r.collect();
}

RenderVars soft_rasterize_var(diff::Var verts_cam, diff::Var colors,
                              const std::vector<std::array<int, 3>>& faces, const Camera& cam,
                              const RasterSettings& settings) {
  diff::Tape& t = *verts_cam.tape;
  diff::Var packed = t.apply(std::make_unique<RasterizeOp>(faces, cam, settings), {verts_cam, colors});
  diff::Var cols = diff::transpose(packed);  // [5, hw]
  RenderVars out;
  out.rgb = diff::transpose(diff::slice_rows(cols, 0, 3));
  out.mask = diff::transpose(diff::slice_rows(cols, 3, 4));
  out.depth = diff::transpose(diff::slice_rows(cols, 4, 5));
  return out;
}

}  // namespace csepose::render

#pragma once

#include "csepose/diff/ops.hpp"
#include "csepose/geom/camera.hpp"

namespace csepose::render {

using geom::Camera;
using geom::Vec3;

struct RasterSettings {
  double sigma = 1e-4;   // silhouette softness, squared pixels
  double gamma = 1e-4;   // color/depth aggregation temperature
  Vec3 background = Vec3::Zero();

  static RasterSettings defaults_for(const Camera& cam) {
    RasterSettings s;
    const double diag2 = static_cast<double>(cam.width) * cam.width +
                         static_cast<double>(cam.height) * cam.height;
    s.sigma = 1e-4 * diag2;
    s.gamma = 1e-4;
    return s;
  }
  void validate() const {
    if (sigma <= 0 || gamma <= 0) throw std::invalid_argument("RasterSettings: sigma, gamma must be > 0");
  }
};

struct RenderOutput {
  int height = 0, width = 0;
  diff::NdArray rgb;    // [h, w, 3] in [0,1]
  diff::NdArray mask;   // [h, w] in [0,1]
  diff::NdArray depth;  // [h, w], soft depth gated by hard coverage (0 = background)
  // hard-coverage byproducts (z-buffer at pixel centers)
  std::vector<std::uint8_t> covered;  // [h*w]
  std::vector<double> z_near;         // [h*w], 0 where uncovered
  std::vector<int> face_near;         // [h*w], -1 where uncovered
};

// Soft rasterization of a vertex-colored mesh given camera-frame vertices.
// Face influence: D_j(p) = sigmoid(delta * d^2(p, boundary) / sigma) with
// delta = +1 inside the projected face; mask = 1 - prod(1 - D_j); color and
// depth aggregate covering faces with softmax(z_near/z / gamma) weights and
// blend with the background by the soft mask. Depth is gated by hard
// coverage. Throws if any vertex has non-positive depth.
RenderOutput soft_rasterize(const std::vector<Vec3>& verts_cam,
                            const std::vector<std::array<int, 3>>& faces,
                            const std::vector<Vec3>& vertex_colors, const Camera& cam,
                            const RasterSettings& settings);

struct RenderVars {
  diff::Var rgb;    // [h*w, 3]
  diff::Var mask;   // [h*w, 1]
  diff::Var depth;  // [h*w, 1]
};

// Tape version: verts_cam [N,3] and colors [N,3] are differentiable inputs.
RenderVars soft_rasterize_var(diff::Var verts_cam, diff::Var colors,
                              const std::vector<std::array<int, 3>>& faces, const Camera& cam,
                              const RasterSettings& settings);

}  // namespace csepose::render

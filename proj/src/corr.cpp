#include "csepose/cse/corr.hpp"

namespace csepose::cse {

using namespace csepose::diff;

PixelGrid foreground_grid(const std::vector<std::uint8_t>& fg, int height, int width) {
  if (static_cast<int>(fg.size()) != height * width) {
    throw std::invalid_argument("foreground_grid: mask size mismatch");
  }
  PixelGrid grid;
  grid.height = height;
  grid.width = width;
  std::vector<double> coords;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (!fg[static_cast<std::size_t>(r) * width + c]) continue;
      grid.cells.push_back(r * width + c);
      coords.push_back(c + 0.5);
      coords.push_back(r + 0.5);
    }
  }
  grid.coords = NdArray({static_cast<std::int64_t>(grid.cells.size()), 2}, std::move(coords));
  return grid;
}

CorrVars corr_matrices(Var pixel_feats, Var vertex_feats, double tau) {
  if (tau <= 0) throw std::invalid_argument("corr_matrices: tau must be positive");
  Tape& t = *pixel_feats.tape;
  if (t.value(pixel_feats).rows0() < 1) {
    throw std::invalid_argument("corr_matrices: needs at least one foreground pixel");
  }
  Var sim = scale(cosine_similarity(pixel_feats, vertex_feats), 1.0 / tau);  // [P,N]
  CorrVars out;
  out.tau = tau;
  out.w2d3d = softmax(sim, 1);
  out.w3d2d = softmax(transpose(sim), 1);
  return out;
}

Var map_2d_to_3d(const CorrVars& corr, Var vertices) { return matmul(corr.w2d3d, vertices); }

Var map_3d_to_2d(const CorrVars& corr, Var pixel_coords) { return matmul(corr.w3d2d, pixel_coords); }

Var texture_transfer(const CorrVars& corr, Var pixel_colors) {
  return matmul(corr.w3d2d, pixel_colors);
}

Var forward_cycle_matrix(const CorrVars& src, const CorrVars& tgt) {
  Var w = matmul(src.w2d3d, tgt.w3d2d);  // [P_src, P_tgt]
  return div(w, sum(w, 1));
}

Var forward_cycle_points(Var forward_matrix, Var target_coords) {
  return matmul(forward_matrix, target_coords);
}

Var confidence(const CorrVars& corr, Var pixel_coords, double rho) {
  if (rho <= 0) throw std::invalid_argument("confidence: rho must be positive");
  Var psi = map_3d_to_2d(corr, pixel_coords);    // [N,2]
  Var composite = matmul(corr.w2d3d, psi);       // [P,2]
  Var offset2 = sqnorm_rows(sub(composite, pixel_coords));
  return exp(scale(offset2, -1.0 / (rho * rho)));
}

}  // namespace csepose::cse

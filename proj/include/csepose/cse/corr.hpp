#pragma once

#include "csepose/diff/ops.hpp"

namespace csepose::cse {

using diff::NdArray;
using diff::Var;

// Foreground cells of a feature grid, row-major. coords holds continuous
// (x, y) cell centers in grid units.
struct PixelGrid {
  int height = 0, width = 0;
  std::vector<int> cells;  // row-major indices of foreground cells
  NdArray coords;          // [P, 2]

  int count() const { return static_cast<int>(cells.size()); }
};

PixelGrid foreground_grid(const std::vector<std::uint8_t>& fg, int height, int width);

// Bidirectional softmax correspondence between foreground pixels and mesh
// vertices. Both matrices are row-stochastic.
struct CorrVars {
  Var w2d3d;  // [P, N], softmax over vertices
  Var w3d2d;  // [N, P], softmax over pixels
  double tau = 0.1;
};

CorrVars corr_matrices(Var pixel_feats, Var vertex_feats, double tau);

Var map_2d_to_3d(const CorrVars& corr, Var vertices);        // phi: [P,3]
Var map_3d_to_2d(const CorrVars& corr, Var pixel_coords);    // psi: [N,2]
Var texture_transfer(const CorrVars& corr, Var pixel_colors);  // [N,3]

// Row-renormalized product W_src^2d3d * W_tgt^3d2d.
Var forward_cycle_matrix(const CorrVars& src, const CorrVars& tgt);
// Transported source-pixel locations on the target grid: [P_src, 2].
Var forward_cycle_points(Var forward_matrix, Var target_coords);

// Round-trip agreement conf_p = exp(-||psi(phi(p)) - p||^2 / rho^2), where
// psi(phi(p)) interpolates per-vertex psi outputs with p's w2d3d row.
Var confidence(const CorrVars& corr, Var pixel_coords, double rho);

}  // namespace csepose::cse

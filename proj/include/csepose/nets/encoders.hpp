#pragma once

#include <map>

#include "csepose/core/rng.hpp"
#include "csepose/diff/ops.hpp"
#include "csepose/diff/params.hpp"
#include "csepose/geom/mesh.hpp"

namespace csepose::nets {

using diff::NdArray;
using diff::ParamStore;
using diff::Tape;
using diff::Var;

struct EncoderConfig {
  int shape_code_dim = 64;   // u_shape
  int embed_dim = 64;        // surface embedding width
  int feature_stride = 4;    // pixel-feature downsampling
  int pose_hidden = 128;     // 4-layer pose MLP width
  int deformer_hidden = 48;  // 5 fully connected layers
  int pointnet_hidden = 48;  // 3-layer point encoder
  double deform_bound = 0.25;
  double mean_depth = 3.0;   // translation head predicts log-depth around this

  void validate() const;
};

// Creates every trainable array with seeded He initialization. The learnable
// canonical prior and the shape deformer go to the "deform" group (they run
// at the lower learning rate); everything else is "main".
void init_model_params(ParamStore& store, const EncoderConfig& cfg, const geom::TriMesh& prior,
                       Rng& rng);

struct ImageEncoding {
  Var shape_codes;  // [B, s]
  Var rot6d;        // [B, 6]
  Var trans_raw;    // [B, 3] (dx, dy, log-depth offset)
  Var pixel_feats;  // [B * fh * fw, d]
  int feat_h = 0, feat_w = 0;
};

// Per-tape forward builder over a frozen ParamStore. Geometry-dependent
// gather index tables are cached per (batch, image size).
class ModelGraph {
 public:
  ModelGraph(Tape& tape, const ParamStore& store, const EncoderConfig& cfg);

  // images as [B*H*W, 3] rows in [0,1], row-major per frame
  ImageEncoding encode_images(Var images, int batch, int height, int width);

  Var prior_vertices();  // [N,3] learnable canonical prior

  // Bounded per-vertex offsets for each frame's shape code: [B*N, 3].
  Var deform_offsets(Var shape_codes, Var prior_verts, int batch);

  // Surface embeddings of (deformed) vertices stacked per frame: [B*N, d].
  Var vertex_features(Var verts_all, int batch);

  // scene translation (x, y, mean_depth * exp(dz)) from one raw row [1,3]
  Var translation_of(Var trans_raw, int frame);
  Var rotation_of(Var rot6d, int frame);  // [3,3]

  // Tape leaf of a named parameter (shared across the whole graph); the
  // training loop harvests per-parameter gradients through these.
  Var parameter_leaf(const std::string& name) { return param(name); }

  const EncoderConfig& config() const { return cfg_; }

 private:
  Var param(const std::string& name);
  Var conv3(Var x, const std::string& name, int batch, int in_h, int in_w, int in_ch, int out_ch,
            int stride, bool activate = true);
  Var conv1(Var x, const std::string& name, int in_ch, int out_ch, bool activate = true);
  Var upsample2(Var x, int batch, int in_h, int in_w, int ch);
  Var linear(Var x, const std::string& name, bool activate = false);

  const std::vector<std::int64_t>& conv_indices(int batch, int h, int w, int stride);
  const std::vector<std::int64_t>& up_indices(int batch, int h, int w);

  Tape& tape_;
  const ParamStore& store_;
  EncoderConfig cfg_;
  std::map<std::string, Var> param_cache_;
  std::map<std::tuple<int, int, int, int>, std::vector<std::int64_t>> conv_idx_cache_;
  std::map<std::tuple<int, int, int>, std::vector<std::int64_t>> up_idx_cache_;
};

}  // namespace csepose::nets

#include "csepose/nets/encoders.hpp"

#include "csepose/geom/diffgeom.hpp"

namespace csepose::nets {

using namespace csepose::diff;

void EncoderConfig::validate() const {
  if (shape_code_dim <= 0 || embed_dim <= 0 || pose_hidden <= 0 || deformer_hidden <= 0 ||
      pointnet_hidden <= 0) {
    throw std::invalid_argument("EncoderConfig: dimensions must be positive");
  }
  if (feature_stride != 4) {
    throw std::invalid_argument("EncoderConfig: feature stride is fixed at 4");
  }
  if (mean_depth <= 0) throw std::invalid_argument("EncoderConfig: mean depth must be positive");
}

namespace {

// trunk widths 16 -> 128 over five stride-2 blocks
constexpr int kTrunkCh[6] = {3, 16, 32, 64, 128, 128};

NdArray he_init(Rng& rng, Shape shape, std::int64_t fan_in) {
  NdArray w = NdArray::zeros(std::move(shape));
  const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = rng.normal() * s;
  return w;
}

void add_linear(ParamStore& store, const std::string& name, const std::string& group, Rng& rng,
                std::int64_t in, std::int64_t out, double weight_scale = 1.0) {
  NdArray w = he_init(rng, {in, out}, in);
  if (weight_scale != 1.0) {
    for (auto& v : w.data) v *= weight_scale;
  }
  store.add(name + ".w", group, std::move(w));
  store.add(name + ".b", group, NdArray::zeros({1, out}));
}

}  // namespace

void init_model_params(ParamStore& store, const EncoderConfig& cfg, const geom::TriMesh& prior,
                       Rng& rng) {
  cfg.validate();
  // learnable canonical prior
  store.add("prior.vbar", "deform", geom::vertices_to_array(prior.vertices));

  for (int b = 1; b <= 5; ++b) {
    add_linear(store, "trunk.b" + std::to_string(b), "main", rng,
               9LL * kTrunkCh[b - 1], kTrunkCh[b]);
  }
  // 3-level skip decoder: 1x1 projection + 3x3 conv per level
  const int dec_in[3] = {128 + 128, 96 + 64, 64 + 32};
  const int dec_out[3] = {96, 64, 64};
  for (int l = 0; l < 3; ++l) {
    add_linear(store, "dec.d" + std::to_string(l + 1) + ".proj", "main", rng, dec_in[l], 48);
    add_linear(store, "dec.d" + std::to_string(l + 1) + ".conv", "main", rng, 9LL * 48, dec_out[l]);
  }
  // heads from the pooled trunk feature
  add_linear(store, "head.shape", "main", rng, 128, cfg.shape_code_dim);
  for (int l = 1; l <= 3; ++l) {
    add_linear(store, "head.pose.l" + std::to_string(l), "main", rng,
               l == 1 ? 128 : cfg.pose_hidden, cfg.pose_hidden);
  }
  // small weights + identity bias: near-identity rotation with live gradients
  add_linear(store, "head.pose.l4", "main", rng, cfg.pose_hidden, 6, 1e-2);
  {
    NdArray& b = store.value("head.pose.l4.b");
    b[0] = 1.0;
    b[4] = 1.0;
  }
  add_linear(store, "head.trans", "main", rng, 128, 3, 1e-2);

  // shape deformer: 5 fully connected layers, zero-initialized output
  const int dh = cfg.deformer_hidden;
  store.add("deform.l1.wx", "deform", he_init(rng, {3, dh}, 3));
  store.add("deform.l1.wc", "deform", he_init(rng, {cfg.shape_code_dim, dh}, cfg.shape_code_dim));
  store.add("deform.l1.b", "deform", NdArray::zeros({1, dh}));
  for (int l = 2; l <= 4; ++l) {
    add_linear(store, "deform.l" + std::to_string(l), "deform", rng, dh, dh);
  }
  store.add("deform.l5.w", "deform", NdArray::zeros({dh, 3}));
  store.add("deform.l5.b", "deform", NdArray::zeros({1, 3}));

  // point encoder: per-vertex layers, max-pooled context, output embedding
  const int ph = cfg.pointnet_hidden;
  add_linear(store, "pointnet.l1", "main", rng, 3, ph);
  add_linear(store, "pointnet.l2", "main", rng, ph, ph);
  add_linear(store, "pointnet.l3", "main", rng, 2LL * ph, cfg.embed_dim);
}

ModelGraph::ModelGraph(Tape& tape, const ParamStore& store, const EncoderConfig& cfg)
    : tape_(tape), store_(store), cfg_(cfg) {
  cfg_.validate();
}

Var ModelGraph::param(const std::string& name) {
  auto it = param_cache_.find(name);
  if (it != param_cache_.end()) return it->second;
  Var v = tape_.borrowed_leaf(&store_.value(name), true);
  param_cache_.emplace(name, v);
  return v;
}

const std::vector<std::int64_t>& ModelGraph::conv_indices(int batch, int h, int w, int stride) {
  const auto key = std::make_tuple(batch, h, w, stride);
  auto it = conv_idx_cache_.find(key);
  if (it != conv_idx_cache_.end()) return it->second;
  const int oh = h / stride, ow = w / stride;
  const std::int64_t pad_row = static_cast<std::int64_t>(batch) * h * w;  // appended zero row
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(batch) * oh * ow * 9);
  for (int f = 0; f < batch; ++f) {
    const std::int64_t base = static_cast<std::int64_t>(f) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const int cy = oy * stride + stride / 2;
        const int cx = ox * stride + stride / 2;
        for (int ky = -1; ky <= 1; ++ky) {
          for (int kx = -1; kx <= 1; ++kx) {
            const int y = cy + ky, x = cx + kx;
            idx.push_back(y < 0 || y >= h || x < 0 || x >= w ? pad_row
                                                             : base + static_cast<std::int64_t>(y) * w + x);
          }
        }
      }
    }
  }
  return conv_idx_cache_.emplace(key, std::move(idx)).first->second;
}

const std::vector<std::int64_t>& ModelGraph::up_indices(int batch, int h, int w) {
  const auto key = std::make_tuple(batch, h, w);
  auto it = up_idx_cache_.find(key);
  if (it != up_idx_cache_.end()) return it->second;
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(batch) * h * w * 4);
  for (int f = 0; f < batch; ++f) {
    const std::int64_t base = static_cast<std::int64_t>(f) * h * w;
    for (int y = 0; y < 2 * h; ++y) {
      for (int x = 0; x < 2 * w; ++x) {
        idx.push_back(base + static_cast<std::int64_t>(y / 2) * w + x / 2);
      }
    }
  }
  return up_idx_cache_.emplace(key, std::move(idx)).first->second;
}

Var ModelGraph::conv3(Var x, const std::string& name, int batch, int in_h, int in_w, int in_ch,
                      int out_ch, int stride, bool activate) {
  (void)out_ch;
  Var padded = concat({x, tape_.constant(NdArray::zeros({1, in_ch}))}, 0);
  Var patches = gather_rows(padded, conv_indices(batch, in_h, in_w, stride));
  const std::int64_t rows = static_cast<std::int64_t>(batch) * (in_h / stride) * (in_w / stride);
  Var cols = reshape(patches, {rows, 9LL * in_ch});
  Var y = add(matmul(cols, param(name + ".w")), param(name + ".b"));
  return activate ? leaky_relu(y) : y;
}

Var ModelGraph::conv1(Var x, const std::string& name, int in_ch, int out_ch, bool activate) {
  (void)in_ch;
  (void)out_ch;
  Var y = add(matmul(x, param(name + ".w")), param(name + ".b"));
  return activate ? leaky_relu(y) : y;
}

Var ModelGraph::upsample2(Var x, int batch, int in_h, int in_w, int ch) {
  (void)ch;
  return gather_rows(x, up_indices(batch, in_h, in_w));
}

Var ModelGraph::linear(Var x, const std::string& name, bool activate) {
  Var y = add(matmul(x, param(name + ".w")), param(name + ".b"));
  return activate ? leaky_relu(y) : y;
}

ImageEncoding ModelGraph::encode_images(Var images, int batch, int height, int width) {
  if (height % 32 != 0 || width % 32 != 0) {
    throw std::invalid_argument("encode_images: image sides must be divisible by 32, got " +
                                std::to_string(width) + "x" + std::to_string(height));
  }
  const auto& shp = tape_.shape(images);
  if (shp != Shape{static_cast<std::int64_t>(batch) * height * width, 3}) {
    throw std::invalid_argument("encode_images: images must be [B*H*W, 3]");
  }
  // five stride-2 trunk blocks
  Var e1 = conv3(images, "trunk.b1", batch, height, width, 3, 16, 2);
  Var e2 = conv3(e1, "trunk.b2", batch, height / 2, width / 2, 16, 32, 2);
  Var e3 = conv3(e2, "trunk.b3", batch, height / 4, width / 4, 32, 64, 2);
  Var e4 = conv3(e3, "trunk.b4", batch, height / 8, width / 8, 64, 128, 2);
  Var e5 = conv3(e4, "trunk.b5", batch, height / 16, width / 16, 128, 128, 2);

  // pooled global feature per frame
  const std::int64_t cells = (static_cast<std::int64_t>(height) / 32) * (width / 32);
  Var pooled = reshape(mean(reshape(e5, {batch, cells, 128}), 1), {batch, 128});

  ImageEncoding out;
  out.shape_codes = linear(pooled, "head.shape");
  Var ph = linear(pooled, "head.pose.l1", true);
  ph = linear(ph, "head.pose.l2", true);
  ph = linear(ph, "head.pose.l3", true);
  out.rot6d = linear(ph, "head.pose.l4");
  out.trans_raw = linear(pooled, "head.trans");

  // skip decoder back to stride 4
  Var d1 = upsample2(e5, batch, height / 32, width / 32, 128);
  d1 = conv1(concat({d1, e4}, 1), "dec.d1.proj", 256, 48);
  d1 = conv3(d1, "dec.d1.conv", batch, height / 16, width / 16, 48, 96, 1);
  Var d2 = upsample2(d1, batch, height / 16, width / 16, 96);
  d2 = conv1(concat({d2, e3}, 1), "dec.d2.proj", 160, 48);
  d2 = conv3(d2, "dec.d2.conv", batch, height / 8, width / 8, 48, 64, 1);
  Var d3 = upsample2(d2, batch, height / 8, width / 8, 64);
  d3 = conv1(concat({d3, e2}, 1), "dec.d3.proj", 96, 48);
  out.pixel_feats = conv3(d3, "dec.d3.conv", batch, height / 4, width / 4, 48, 64, 1,
                          /*activate=*/false);
  out.feat_h = height / cfg_.feature_stride;
  out.feat_w = width / cfg_.feature_stride;
  return out;
}

Var ModelGraph::prior_vertices() { return param("prior.vbar"); }

Var ModelGraph::deform_offsets(Var shape_codes, Var prior_verts, int batch) {
  const std::int64_t n = tape_.shape(prior_verts)[0];
  // tile the vertex block per frame; project the code once per frame
  std::vector<std::int64_t> tile;
  tile.reserve(static_cast<std::size_t>(batch) * n);
  std::vector<std::int64_t> code_rows;
  code_rows.reserve(tile.capacity());
  for (int f = 0; f < batch; ++f) {
    for (std::int64_t v = 0; v < n; ++v) {
      tile.push_back(v);
      code_rows.push_back(f);
    }
  }
  Var xyz = gather_rows(prior_verts, std::move(tile));                       // [B*N, 3]
  Var code_proj = matmul(shape_codes, param("deform.l1.wc"));                // [B, dh]
  Var code_all = gather_rows(code_proj, std::move(code_rows));               // [B*N, dh]
  Var h = leaky_relu(add(add(matmul(xyz, param("deform.l1.wx")), code_all), param("deform.l1.b")));
  h = linear(h, "deform.l2", true);
  h = linear(h, "deform.l3", true);
  h = linear(h, "deform.l4", true);
  Var raw = linear(h, "deform.l5");
  return tanh_bounded(raw, cfg_.deform_bound);
}

Var ModelGraph::vertex_features(Var verts_all, int batch) {
  const std::int64_t rows = tape_.shape(verts_all)[0];
  if (rows % batch != 0) throw std::invalid_argument("vertex_features: rows not divisible by batch");
  const std::int64_t n = rows / batch;
  const int ph = cfg_.pointnet_hidden;
  Var h = linear(verts_all, "pointnet.l1", true);
  h = linear(h, "pointnet.l2", true);
  // per-frame max-pooled context, broadcast back to each vertex
  Var ctx = max_along(reshape(h, {batch, n, ph}), 1);                  // [B,1,ph]
  Var ctx_all = reshape(broadcast_to(ctx, {batch, n, ph}), {rows, ph});
  return linear(concat({h, ctx_all}, 1), "pointnet.l3");
}

Var ModelGraph::translation_of(Var trans_raw, int frame) {
  Var row = slice_rows(trans_raw, frame, frame + 1);  // [1,3]
  Var cols = transpose(row);                          // [3,1]
  Var dx = slice_rows(cols, 0, 1);
  Var dy = slice_rows(cols, 1, 2);
  Var dz = slice_rows(cols, 2, 3);
  Var z = scale(exp(dz), cfg_.mean_depth);
  return reshape(concat({dx, dy, z}, 0), {3});
}

Var ModelGraph::rotation_of(Var rot6d, int frame) {
  return geom::rotation_from_6d(reshape(slice_rows(rot6d, frame, frame + 1), {6}));
}

}  // namespace csepose::nets

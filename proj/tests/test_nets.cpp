#include <doctest.h>

#include "csepose/diff/optim.hpp"
#include "csepose/nets/encoders.hpp"
#include "csepose/synth/priors.hpp"

using namespace csepose;
using namespace csepose::diff;
using namespace csepose::nets;

namespace {

NdArray random_image(Rng& rng, int h, int w) {
  NdArray img = NdArray::zeros({static_cast<std::int64_t>(h) * w, 3});
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

struct Fixture {
  EncoderConfig cfg;
  geom::TriMesh prior;
  ParamStore store;
  Fixture() {
    prior = synth::make_icosphere(1);  // small mesh keeps the test fast
    Rng rng(77);
    init_model_params(store, cfg, prior, rng);
  }
};

}  // namespace

TEST_CASE("encoder head shapes and determinism") {
  Fixture fx;
  Rng rng(1);
  NdArray img = random_image(rng, 64, 64);
  auto run = [&] {
    Tape t;
    ModelGraph model(t, fx.store, fx.cfg);
    auto enc = model.encode_images(t.constant(img), 1, 64, 64);
    return std::make_tuple(t.value(enc.shape_codes), t.value(enc.rot6d), t.value(enc.trans_raw),
                           t.value(enc.pixel_feats));
  };
  auto [codes, rot, trans, feats] = run();
  CHECK(codes.shape == Shape{1, 64});
  CHECK(rot.shape == Shape{1, 6});
  CHECK(trans.shape == Shape{1, 3});
  CHECK(feats.shape == Shape{16 * 16, 64});
  auto [codes2, rot2, trans2, feats2] = run();
  CHECK(codes.data == codes2.data);
  CHECK(rot.data == rot2.data);
  CHECK(trans.data == trans2.data);
  CHECK(feats.data == feats2.data);
}

TEST_CASE("pixel features output is input/4 in each dimension") {
  Fixture fx;
  Rng rng(2);
  NdArray img = random_image(rng, 128, 128);
  Tape t;
  ModelGraph model(t, fx.store, fx.cfg);
  auto enc = model.encode_images(t.constant(img), 1, 128, 128);
  CHECK(enc.feat_h == 32);
  CHECK(enc.feat_w == 32);
  CHECK(t.value(enc.pixel_feats).shape == Shape{32 * 32, 64});
  CHECK_THROWS_AS(model.encode_images(t.constant(img), 1, 128, 127), std::invalid_argument);
}

TEST_CASE("pixel features are approximately shift equivariant") {
  Fixture fx;
  Rng rng(3);
  const int h = 64, w = 64;
  // smooth random image so a 4px shift is well represented
  NdArray base = NdArray::zeros({h + 4, w, 3});
  for (std::int64_t r = 0; r < h + 4; ++r) {
    for (std::int64_t c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        base[(r * w + c) * 3 + ch] =
            0.5 + 0.25 * std::sin(0.21 * r + 1.3 * ch) + 0.25 * std::cos(0.17 * c - 0.4 * ch);
      }
    }
  }
  auto crop = [&](int row0) {
    NdArray img = NdArray::zeros({static_cast<std::int64_t>(h) * w, 3});
    for (std::int64_t r = 0; r < h; ++r) {
      for (std::int64_t c = 0; c < w * 3; ++c) img[r * w * 3 + c] = base[(r + row0) * w * 3 + c];
    }
    return img;
  };
  Tape t;
  ModelGraph model(t, fx.store, fx.cfg);
  auto enc_a = model.encode_images(t.constant(crop(0)), 1, h, w);
  auto enc_b = model.encode_images(t.constant(crop(4)), 1, h, w);
  const NdArray& fa = t.value(enc_a.pixel_feats);
  const NdArray& fb = t.value(enc_b.pixel_feats);
  // feature map of the shifted crop should match the original shifted by one
  // cell; compare over interior rows
  double dot = 0, na = 0, nb = 0;
  const int fw = 16;
  for (int r = 2; r < 14; ++r) {
    for (int c = 0; c < fw; ++c) {
      for (int k = 0; k < 64; ++k) {
        const double va = fa[(static_cast<std::int64_t>(r + 1) * fw + c) * 64 + k];
        const double vb = fb[(static_cast<std::int64_t>(r) * fw + c) * 64 + k];
        dot += va * vb;
        na += va * va;
        nb += vb * vb;
      }
    }
  }
  CHECK(dot / std::sqrt(na * nb) > 0.9);
}

TEST_CASE("deformer is the identity at initialization and respects the bound") {
  Fixture fx;
  const std::int64_t n = fx.prior.vertex_count();
  Rng rng(4);

  Tape t;
  ModelGraph model(t, fx.store, fx.cfg);
  Var prior_v = model.prior_vertices();
  NdArray codes = NdArray::zeros({1, 64});
  for (auto& v : codes.data) v = rng.normal();
  Var off = model.deform_offsets(t.constant(codes), prior_v, 1);
  CHECK(t.shape(off) == Shape{n, 3});
  for (std::int64_t i = 0; i < t.value(off).numel(); ++i) {
    CHECK(t.value(off)[i] == 0.0);  // zero-initialized final layer
  }

  // random weights in the last layer: offsets stay within the bound
  ParamStore store2;
  Rng rng2(5);
  init_model_params(store2, fx.cfg, fx.prior, rng2);
  NdArray& w5 = store2.value("deform.l5.w");
  for (auto& v : w5.data) v = rng2.normal() * 3.0;
  for (int trial = 0; trial < 5; ++trial) {
    NdArray code = NdArray::zeros({1, 64});
    for (auto& v : code.data) v = rng2.normal() * 2.0;
    Tape t2;
    ModelGraph m2(t2, store2, fx.cfg);
    Var off2 = m2.deform_offsets(t2.constant(code), m2.prior_vertices(), 1);
    for (std::int64_t i = 0; i < t2.value(off2).numel(); ++i) {
      CHECK(std::abs(t2.value(off2)[i]) <= 0.25);
    }
    // purity: same code twice gives the same offsets
    Var off3 = m2.deform_offsets(t2.constant(code), m2.prior_vertices(), 1);
    CHECK(t2.value(off2).data == t2.value(off3).data);
  }
}

TEST_CASE("vertex features are permutation equivariant with an invariant context") {
  Fixture fx;
  Rng rng(6);
  const std::int64_t n = 20;
  NdArray verts = NdArray::zeros({n, 3});
  for (auto& v : verts.data) v = rng.uniform(-0.5, 0.5);
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuffler(7);
  shuffler.shuffle(perm);
  NdArray permuted = NdArray::zeros({n, 3});
  for (std::int64_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) permuted[3 * i + c] = verts[3 * perm[static_cast<std::size_t>(i)] + c];
  }
  Tape t;
  ModelGraph model(t, fx.store, fx.cfg);
  const NdArray fa = t.value(model.vertex_features(t.constant(verts), 1));
  const NdArray fb = t.value(model.vertex_features(t.constant(permuted), 1));
  CHECK(fa.shape == Shape{n, 64});
  for (std::int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < 64; ++k) {
      CHECK(fb[i * 64 + k] ==
            doctest::Approx(fa[perm[static_cast<std::size_t>(i)] * 64 + k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("one training step makes every parameter reachable") {
  EncoderConfig cfg;
  geom::TriMesh prior = synth::make_icosphere(0);  // 12 vertices
  ParamStore store;
  Rng rng(8);
  init_model_params(store, cfg, prior, rng);
  NdArray img = random_image(rng, 64, 64);

  // fixed random contraction weights so every output influences the loss
  auto contraction = [&rng](const Shape& s) {
    NdArray w = NdArray::zeros(s);
    for (auto& v : w.data) v = rng.uniform(0.2, 1.0);
    return w;
  };
  NdArray w_rot = contraction({1, 6}), w_tr = contraction({1, 3});
  NdArray w_feat = contraction({16 * 16, 64});
  NdArray w_off = contraction({12, 3});
  NdArray w_vf = contraction({12, 64});

  OptimizerConfig ocfg;
  AdamW opt(ocfg);
  int zero_grad_params_step0 = 0;
  std::vector<std::string> still_zero_after_step1;
  for (int step = 0; step < 2; ++step) {
    Tape t;
    ModelGraph model(t, store, cfg);
    auto enc = model.encode_images(t.constant(img), 1, 64, 64);
    Var off = model.deform_offsets(enc.shape_codes, model.prior_vertices(), 1);
    Var verts = add(model.prior_vertices(), off);
    Var vf = model.vertex_features(verts, 1);
    Var loss = sum(mul(enc.rot6d, t.constant(w_rot)));
    loss = add(loss, sum(mul(enc.trans_raw, t.constant(w_tr))));
    loss = add(loss, sum(mul(enc.pixel_feats, t.constant(w_feat))));
    loss = add(loss, sum(mul(off, t.constant(w_off))));
    loss = add(loss, sum(mul(vf, t.constant(w_vf))));
    t.backward(loss);

    std::vector<NdArray> grads(store.size());
    std::vector<const NdArray*> gptr(store.size(), nullptr);
    for (std::size_t i = 0; i < store.size(); ++i) {
      Var leaf = model.parameter_leaf(store.entry(i).name);
      grads[i] = t.grad_or_zero(leaf);
      gptr[i] = &grads[i];
      double linf = 0;
      for (double v : grads[i].data) linf = std::max(linf, std::abs(v));
      if (step == 0 && linf == 0.0) ++zero_grad_params_step0;
      if (step == 1 && linf == 0.0) still_zero_after_step1.push_back(store.entry(i).name);
    }
    opt.step(store, gptr);
  }
  // the zero-initialized deformer output blocks some paths at step 0 only
  CHECK(zero_grad_params_step0 > 0);
  CHECK_MESSAGE(still_zero_after_step1.empty(),
                "dead parameters after one step: ",
                still_zero_after_step1.empty() ? "" : still_zero_after_step1[0]);
}

#include "csepose/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace csepose::diff {

namespace {

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                              shape_str(b));
}

Var apply1(Var a, std::unique_ptr<OpNode> op) { return a.tape->apply(std::move(op), {a}); }
Var apply2(Var a, Var b, std::unique_ptr<OpNode> op) { return a.tape->apply(std::move(op), {a, b}); }

// ---------------------------------------------------------------------------
// broadcasting helpers
// ---------------------------------------------------------------------------

struct BcastPlan {
  Shape out;
  bool same_a = false, same_b = false;   // input already has the output shape
  std::vector<std::int64_t> stride_a, stride_b, stride_out;  // aligned to out rank
};

BcastPlan make_plan(const Shape& a, const Shape& b, std::string_view op) {
  BcastPlan p;
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  p.out.resize(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    const std::int64_t da = i < r - ra ? 1 : a[static_cast<std::size_t>(i - (r - ra))];
    const std::int64_t db = i < r - rb ? 1 : b[static_cast<std::size_t>(i - (r - rb))];
    if (da != db && da != 1 && db != 1) shape_error(op, a, b);
    p.out[static_cast<std::size_t>(i)] = std::max(da, db);
  }
  p.same_a = (p.out == a);
  p.same_b = (p.out == b);
  auto strides_for = [&](const Shape& s) {
    std::vector<std::int64_t> st(static_cast<std::size_t>(r), 0);
    std::int64_t acc = 1;
    const int rs = static_cast<int>(s.size());
    for (int i = rs - 1; i >= 0; --i) {
      const int oi = i + (r - rs);
      st[static_cast<std::size_t>(oi)] = (s[static_cast<std::size_t>(i)] == 1) ? 0 : acc;
      acc *= s[static_cast<std::size_t>(i)];
    }
    return st;
  };
  p.stride_a = strides_for(a);
  p.stride_b = strides_for(b);
  p.stride_out.resize(static_cast<std::size_t>(r));
  std::int64_t acc = 1;
  for (int i = r - 1; i >= 0; --i) {
    p.stride_out[static_cast<std::size_t>(i)] = acc;
    acc *= p.out[static_cast<std::size_t>(i)];
  }
  return p;
}

// Walk the output index space calling fn(off_out, off_a, off_b).
template <typename F>
void bcast_walk(const BcastPlan& p, F&& fn) {
  const int r = static_cast<int>(p.out.size());
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  std::int64_t oa = 0, ob = 0;
  const std::int64_t n = std::accumulate(p.out.begin(), p.out.end(), std::int64_t{1},
                                         std::multiplies<std::int64_t>());
  for (std::int64_t o = 0; o < n; ++o) {
    fn(o, oa, ob);
    for (int i = r - 1; i >= 0; --i) {
      auto ui = static_cast<std::size_t>(i);
      ++idx[ui];
      oa += p.stride_a[ui];
      ob += p.stride_b[ui];
      if (idx[ui] < p.out[ui]) break;
      oa -= p.stride_a[ui] * p.out[ui];
      ob -= p.stride_b[ui] * p.out[ui];
      idx[ui] = 0;
    }
  }
}

enum class BinKind { Add, Sub, Mul, Div };

const char* bin_name(BinKind k) {
  switch (k) {
    case BinKind::Add: return "add";
    case BinKind::Sub: return "sub";
    case BinKind::Mul: return "mul";
    case BinKind::Div: return "div";
  }
  return "?";
}

class BinaryOp final : public OpNode {
 public:
  explicit BinaryOp(BinKind k) : kind_(k) {}
  std::string_view kind() const override { return bin_name(kind_); }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    const NdArray& b = *in[1];
    plan_ = make_plan(a.shape, b.shape, kind());
    NdArray out = NdArray::zeros(plan_.out);
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* po = out.data.data();
    const std::int64_t n = out.numel();
    auto ew = [&](auto f) {
      if (plan_.same_a && plan_.same_b) {
        for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
      } else if (plan_.same_a && b.numel() == 1) {
        const double bv = pb[0];
        for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i], bv);
      } else if (plan_.same_b && a.numel() == 1) {
        const double av = pa[0];
        for (std::int64_t i = 0; i < n; ++i) po[i] = f(av, pb[i]);
      } else {
        bcast_walk(plan_, [&](std::int64_t o, std::int64_t oa, std::int64_t ob) {
          po[o] = f(pa[oa], pb[ob]);
        });
      }
    };
    switch (kind_) {
      case BinKind::Add: ew([](double x, double y) { return x + y; }); break;
      case BinKind::Sub: ew([](double x, double y) { return x - y; }); break;
      case BinKind::Mul: ew([](double x, double y) { return x * y; }); break;
      case BinKind::Div: ew([](double x, double y) { return x / y; }); break;
    }
    return out;
  }

  void grad(std::span<const NdArray* const> in, const NdArray&, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    const NdArray& a = *in[0];
    const NdArray& b = *in[1];
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    const double* pg = gout.data.data();
    // d/da and d/db as functions of (a, b, g)
    auto ga_fn = [&](double x, double y, double g) {
      switch (kind_) {
        case BinKind::Add:
        case BinKind::Sub: return g;
        case BinKind::Mul: return g * y;
        case BinKind::Div: return g / y;
      }
      return 0.0;
      (void)x;
    };
    auto gb_fn = [&](double x, double y, double g) {
      switch (kind_) {
        case BinKind::Add: return g;
        case BinKind::Sub: return -g;
        case BinKind::Mul: return g * x;
        case BinKind::Div: return -g * x / (y * y);
      }
      return 0.0;
    };
    const std::int64_t n = gout.numel();
    if (gin[0]) {
      double* pda = gin[0]->data.data();
      if (plan_.same_a && plan_.same_b) {
        for (std::int64_t i = 0; i < n; ++i) pda[i] += ga_fn(pa[i], pb[i], pg[i]);
      } else {
        bcast_walk(plan_, [&](std::int64_t o, std::int64_t oa, std::int64_t ob) {
          pda[oa] += ga_fn(pa[oa], pb[ob], pg[o]);
        });
      }
    }
    if (gin[1]) {
      double* pdb = gin[1]->data.data();
      if (plan_.same_a && plan_.same_b) {
        for (std::int64_t i = 0; i < n; ++i) pdb[i] += gb_fn(pa[i], pb[i], pg[i]);
      } else {
        bcast_walk(plan_, [&](std::int64_t o, std::int64_t oa, std::int64_t ob) {
          pdb[ob] += gb_fn(pa[oa], pb[ob], pg[o]);
        });
      }
    }
  }

 private:
  BinKind kind_;
  BcastPlan plan_;
};

// ---------------------------------------------------------------------------
// unary elementwise
// ---------------------------------------------------------------------------

class UnaryOp final : public OpNode {
 public:
  enum class K { Exp, Log, Sigmoid, LeakyRelu, Clamp, SmoothL1, Power, Affine };
  UnaryOp(K k, double p0 = 0.0, double p1 = 0.0) : k_(k), p0_(p0), p1_(p1) {}

  std::string_view kind() const override {
    switch (k_) {
      case K::Exp: return "exp";
      case K::Log: return "log";
      case K::Sigmoid: return "sigmoid";
      case K::LeakyRelu: return "leaky_relu";
      case K::Clamp: return "clamp";
      case K::SmoothL1: return "smooth_l1";
      case K::Power: return "power";
      case K::Affine: return "affine";
    }
    return "?";
  }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    NdArray out = NdArray::zeros(a.shape);
    const std::int64_t n = a.numel();
    const double* x = a.data.data();
    double* y = out.data.data();
    switch (k_) {
      case K::Exp:
        for (std::int64_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
        break;
      case K::Log:
        for (std::int64_t i = 0; i < n; ++i) {
          if (x[i] <= 0.0) throw std::invalid_argument("log: non-positive input");
          y[i] = std::log(x[i]);
        }
        break;
      case K::Sigmoid:
        for (std::int64_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
        break;
      case K::LeakyRelu:
        for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : p0_ * x[i];
        break;
      case K::Clamp:
        for (std::int64_t i = 0; i < n; ++i) y[i] = std::min(p1_, std::max(p0_, x[i]));
        break;
      case K::SmoothL1:
        for (std::int64_t i = 0; i < n; ++i) {
          const double ax = std::abs(x[i]);
          y[i] = ax < 1.0 ? 0.5 * x[i] * x[i] : ax - 0.5;
        }
        break;
      case K::Power:
        for (std::int64_t i = 0; i < n; ++i) {
          if (x[i] < 0.0 && std::floor(p0_) != p0_) {
            throw std::invalid_argument("power: negative base with fractional exponent");
          }
          y[i] = std::pow(x[i], p0_);
        }
        break;
      case K::Affine:
        for (std::int64_t i = 0; i < n; ++i) y[i] = p0_ * x[i] + p1_;
        break;
    }
    return out;
  }

  void grad(std::span<const NdArray* const> in, const NdArray& out, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    if (!gin[0]) return;
    const NdArray& a = *in[0];
    const std::int64_t n = a.numel();
    const double* x = a.data.data();
    const double* y = out.data.data();
    const double* g = gout.data.data();
    double* d = gin[0]->data.data();
    switch (k_) {
      case K::Exp:
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i] * y[i];
        break;
      case K::Log:
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i] / x[i];
        break;
      case K::Sigmoid:
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      case K::LeakyRelu:
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i] * (x[i] >= 0.0 ? 1.0 : p0_);
        break;
      case K::Clamp:
        for (std::int64_t i = 0; i < n; ++i) d[i] += (x[i] >= p0_ && x[i] <= p1_) ? g[i] : 0.0;
        break;
      case K::SmoothL1:
        // subgradient 0 at the (measure-zero) point x == 0
        for (std::int64_t i = 0; i < n; ++i) {
          const double s = std::abs(x[i]) < 1.0 ? x[i] : (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
          d[i] += g[i] * s;
        }
        break;
      case K::Power:
        for (std::int64_t i = 0; i < n; ++i) {
          double dv;
          if (x[i] == 0.0) {
            dv = p0_ == 1.0 ? 1.0 : (p0_ > 1.0 ? 0.0 : 0.0);  // subgradient 0 below x^1
          } else {
            dv = p0_ * std::pow(x[i], p0_ - 1.0);
          }
          d[i] += g[i] * dv;
        }
        break;
      case K::Affine:
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i] * p0_;
        break;
    }
  }

 private:
  K k_;
  double p0_, p1_;
};

// ---------------------------------------------------------------------------
// matmul / transpose / cosine similarity
// ---------------------------------------------------------------------------

class MatmulOp final : public OpNode {
 public:
  std::string_view kind() const override { return "matmul"; }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    const NdArray& b = *in[1];
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) shape_error("matmul", a.shape, b.shape);
    NdArray out = NdArray::zeros({a.shape[0], b.shape[1]});
    mat2(out).noalias() = mat2(a) * mat2(b);
    return out;
  }

  void grad(std::span<const NdArray* const> in, const NdArray&, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    const NdArray& a = *in[0];
    const NdArray& b = *in[1];
    ECMap g(gout.data.data(), a.shape[0], b.shape[1]);
    if (gin[0]) mat2(*gin[0]).noalias() += g * mat2(b).transpose();
    if (gin[1]) mat2(*gin[1]).noalias() += mat2(a).transpose() * g;
  }
};

class TransposeOp final : public OpNode {
 public:
  std::string_view kind() const override { return "transpose"; }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    if (a.rank() != 2) throw std::invalid_argument("transpose: expects 2-D, got " + shape_str(a.shape));
    NdArray out = NdArray::zeros({a.shape[1], a.shape[0]});
    mat2(out) = mat2(a).transpose();
    return out;
  }

  void grad(std::span<const NdArray* const> in, const NdArray&, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    if (!gin[0]) return;
    const NdArray& a = *in[0];
    ECMap g(gout.data.data(), a.shape[1], a.shape[0]);
    mat2(*gin[0]) += g.transpose();
  }
};

class CosineSimilarityOp final : public OpNode {
 public:
  std::string_view kind() const override { return "cosine_similarity"; }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    const NdArray& b = *in[1];
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1]) {
      shape_error("cosine_similarity", a.shape, b.shape);
    }
    an_ = NdArray::zeros(a.shape);
    bn_ = NdArray::zeros(b.shape);
    norm_a_.assign(static_cast<std::size_t>(a.shape[0]), 0.0);
    norm_b_.assign(static_cast<std::size_t>(b.shape[0]), 0.0);
    auto normalize = [](const NdArray& src, NdArray& dst, std::vector<double>& norms, const char* side) {
      auto m = mat2(src);
      auto o = mat2(dst);
      for (std::int64_t i = 0; i < src.shape[0]; ++i) {
        const double nn = m.row(i).norm();
        if (nn == 0.0) {
          throw std::invalid_argument(std::string("cosine_similarity: zero-norm ") + side + " row " +
                                      std::to_string(i));
        }
        norms[static_cast<std::size_t>(i)] = nn;
        o.row(i) = m.row(i) / nn;
      }
    };
    normalize(a, an_, norm_a_, "left");
    normalize(b, bn_, norm_b_, "right");
    NdArray out = NdArray::zeros({a.shape[0], b.shape[0]});
    mat2(out).noalias() = mat2(an_) * mat2(bn_).transpose();
    return out;
  }

  void grad(std::span<const NdArray* const> in, const NdArray& out, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    const std::int64_t p = in[0]->shape[0];
    const std::int64_t n = in[1]->shape[0];
    ECMap g(gout.data.data(), p, n);
    ECMap s(out.data.data(), p, n);
    if (gin[0]) {
      EMat tmp = g * mat2(bn_);                       // [p,d]
      Eigen::VectorXd c = (g.array() * s.array()).rowwise().sum();
      tmp.noalias() -= c.asDiagonal() * mat2(an_);
      for (std::int64_t i = 0; i < p; ++i) {
        mat2(*gin[0]).row(i) += tmp.row(i) / norm_a_[static_cast<std::size_t>(i)];
      }
    }
    if (gin[1]) {
      EMat tmp = g.transpose() * mat2(an_);           // [n,d]
      Eigen::VectorXd c = (g.array() * s.array()).colwise().sum();
      tmp.noalias() -= c.asDiagonal() * mat2(bn_);
      for (std::int64_t j = 0; j < n; ++j) {
        mat2(*gin[1]).row(j) += tmp.row(j) / norm_b_[static_cast<std::size_t>(j)];
      }
    }
  }

 private:
  NdArray an_, bn_;
  std::vector<double> norm_a_, norm_b_;
};

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

struct AxisSplit {
  std::int64_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis, std::string_view op) {
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                                shape_str(s));
  }
  AxisSplit sp;
  for (int i = 0; i < axis; ++i) sp.outer *= s[static_cast<std::size_t>(i)];
  sp.n = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

class ReduceOp final : public OpNode {
 public:
  enum class K { Sum, Mean, Max, Min };
  // axis < 0 means reduce everything to a scalar (Sum/Mean only).
  ReduceOp(K k, int axis) : k_(k), axis_(axis) {}

  std::string_view kind() const override {
    switch (k_) {
      case K::Sum: return "sum";
      case K::Mean: return "mean";
      case K::Max: return "max";
      case K::Min: return "min";
    }
    return "?";
  }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    if (axis_ < 0) {
      double acc = 0.0;
      for (double v : a.data) acc += v;
      if (k_ == K::Mean) acc /= static_cast<double>(a.numel());
      return NdArray::scalar(acc);
    }
    const AxisSplit sp = split_axis(a.shape, axis_, kind());
    Shape os = a.shape;
    os[static_cast<std::size_t>(axis_)] = 1;
    NdArray out = NdArray::zeros(os);
    const double* x = a.data.data();
    double* y = out.data.data();
    if (k_ == K::Sum || k_ == K::Mean) {
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t i = 0; i < sp.inner; ++i) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < sp.n; ++j) acc += x[(o * sp.n + j) * sp.inner + i];
          y[o * sp.inner + i] = k_ == K::Mean ? acc / static_cast<double>(sp.n) : acc;
        }
      }
    } else {
      arg_.assign(static_cast<std::size_t>(sp.outer * sp.inner), 0);
      const bool is_max = k_ == K::Max;
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t i = 0; i < sp.inner; ++i) {
          double best = x[o * sp.n * sp.inner + i];
          std::int64_t bj = 0;
          for (std::int64_t j = 1; j < sp.n; ++j) {
            const double v = x[(o * sp.n + j) * sp.inner + i];
            if (is_max ? v > best : v < best) {
              best = v;
              bj = j;
            }
          }
          y[o * sp.inner + i] = best;
          arg_[static_cast<std::size_t>(o * sp.inner + i)] = bj;
        }
      }
    }
    return out;
  }

  void grad(std::span<const NdArray* const> in, const NdArray&, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    if (!gin[0]) return;
    const NdArray& a = *in[0];
    double* d = gin[0]->data.data();
    const double* g = gout.data.data();
    if (axis_ < 0) {
      const double gs = k_ == K::Mean ? g[0] / static_cast<double>(a.numel()) : g[0];
      for (std::int64_t i = 0; i < a.numel(); ++i) d[i] += gs;
      return;
    }
    const AxisSplit sp = split_axis(a.shape, axis_, kind());
    if (k_ == K::Sum || k_ == K::Mean) {
      const double inv = k_ == K::Mean ? 1.0 / static_cast<double>(sp.n) : 1.0;
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t i = 0; i < sp.inner; ++i) {
          const double gv = g[o * sp.inner + i] * inv;
          for (std::int64_t j = 0; j < sp.n; ++j) d[(o * sp.n + j) * sp.inner + i] += gv;
        }
      }
    } else {
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t i = 0; i < sp.inner; ++i) {
          const std::int64_t j = arg_[static_cast<std::size_t>(o * sp.inner + i)];
          d[(o * sp.n + j) * sp.inner + i] += g[o * sp.inner + i];
        }
      }
    }
  }

 private:
  K k_;
  int axis_;
  std::vector<std::int64_t> arg_;
};

class SoftmaxOp final : public OpNode {
 public:
  explicit SoftmaxOp(int axis) : axis_(axis) {}
  std::string_view kind() const override { return "softmax"; }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    const AxisSplit sp = split_axis(a.shape, axis_, kind());
    NdArray out = NdArray::zeros(a.shape);
    const double* x = a.data.data();
    double* y = out.data.data();
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t i = 0; i < sp.inner; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < sp.n; ++j) m = std::max(m, x[(o * sp.n + j) * sp.inner + i]);
        double z = 0.0;
        for (std::int64_t j = 0; j < sp.n; ++j) {
          const double e = std::exp(x[(o * sp.n + j) * sp.inner + i] - m);
          y[(o * sp.n + j) * sp.inner + i] = e;
          z += e;
        }
        for (std::int64_t j = 0; j < sp.n; ++j) y[(o * sp.n + j) * sp.inner + i] /= z;
      }
    }
    return out;
  }

  void grad(std::span<const NdArray* const> in, const NdArray& out, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    if (!gin[0]) return;
    const AxisSplit sp = split_axis(in[0]->shape, axis_, kind());
    const double* y = out.data.data();
    const double* g = gout.data.data();
    double* d = gin[0]->data.data();
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t i = 0; i < sp.inner; ++i) {
        double dot = 0.0;
        for (std::int64_t j = 0; j < sp.n; ++j) {
          const std::int64_t k = (o * sp.n + j) * sp.inner + i;
          dot += g[k] * y[k];
        }
        for (std::int64_t j = 0; j < sp.n; ++j) {
          const std::int64_t k = (o * sp.n + j) * sp.inner + i;
          d[k] += (g[k] - dot) * y[k];
        }
      }
    }
  }

 private:
  int axis_;
};

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

class ConcatOp final : public OpNode {
 public:
  explicit ConcatOp(int axis) : axis_(axis) {}
  std::string_view kind() const override { return "concat"; }

  NdArray run(std::span<const NdArray* const> in) override {
    if (in.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& s0 = in[0]->shape;
    if (axis_ < 0 || axis_ >= static_cast<int>(s0.size())) {
      throw std::invalid_argument("concat: axis out of range");
    }
    Shape os = s0;
    std::int64_t total = 0;
    for (const NdArray* a : in) {
      if (a->rank() != static_cast<int>(s0.size())) shape_error("concat", s0, a->shape);
      for (int i = 0; i < a->rank(); ++i) {
        if (i != axis_ && a->shape[static_cast<std::size_t>(i)] != s0[static_cast<std::size_t>(i)]) {
          shape_error("concat", s0, a->shape);
        }
      }
      total += a->shape[static_cast<std::size_t>(axis_)];
    }
    os[static_cast<std::size_t>(axis_)] = total;
    NdArray out = NdArray::zeros(os);
    const AxisSplit osp = split_axis(os, axis_, kind());
    std::int64_t at = 0;
    for (const NdArray* a : in) {
      const std::int64_t an = a->shape[static_cast<std::size_t>(axis_)];
      for (std::int64_t o = 0; o < osp.outer; ++o) {
        std::memcpy(out.data.data() + (o * osp.n + at) * osp.inner, a->data.data() + o * an * osp.inner,
                    static_cast<std::size_t>(an * osp.inner) * sizeof(double));
      }
      at += an;
    }
    return out;
  }

  void grad(std::span<const NdArray* const> in, const NdArray& out, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    const AxisSplit osp = split_axis(out.shape, axis_, kind());
    std::int64_t at = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      const std::int64_t an = in[k]->shape[static_cast<std::size_t>(axis_)];
      if (gin[k]) {
        for (std::int64_t o = 0; o < osp.outer; ++o) {
          const double* g = gout.data.data() + (o * osp.n + at) * osp.inner;
          double* d = gin[k]->data.data() + o * an * osp.inner;
          for (std::int64_t i = 0; i < an * osp.inner; ++i) d[i] += g[i];
        }
      }
      at += an;
    }
  }

 private:
  int axis_;
};

class GatherRowsOp final : public OpNode {
 public:
  explicit GatherRowsOp(std::vector<std::int64_t> idx) : idx_(std::move(idx)) {}
  std::string_view kind() const override { return "gather_rows"; }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    if (a.rank() < 1) throw std::invalid_argument("gather_rows: rank-0 input");
    const std::int64_t rows = a.shape[0];
    const std::int64_t w = a.rowlen0();
    Shape os = a.shape;
    os[0] = static_cast<std::int64_t>(idx_.size());
    NdArray out = NdArray::zeros(os);
    for (std::size_t i = 0; i < idx_.size(); ++i) {
      const std::int64_t r = idx_[i];
      if (r < 0 || r >= rows) {
        throw std::invalid_argument("gather_rows: index " + std::to_string(r) + " out of [0," +
                                    std::to_string(rows) + ")");
      }
      std::memcpy(out.data.data() + static_cast<std::int64_t>(i) * w, a.data.data() + r * w,
                  static_cast<std::size_t>(w) * sizeof(double));
    }
    return out;
  }

  void grad(std::span<const NdArray* const> in, const NdArray&, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    if (!gin[0]) return;
    const std::int64_t w = in[0]->rowlen0();
    double* d = gin[0]->data.data();
    const double* g = gout.data.data();
    for (std::size_t i = 0; i < idx_.size(); ++i) {
      double* dr = d + idx_[i] * w;
      const double* gr = g + static_cast<std::int64_t>(i) * w;
      for (std::int64_t c = 0; c < w; ++c) dr[c] += gr[c];
    }
  }

 private:
  std::vector<std::int64_t> idx_;
};

class ReshapeOp final : public OpNode {
 public:
  explicit ReshapeOp(Shape target) : target_(std::move(target)) {}
  std::string_view kind() const override { return "reshape"; }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    if (NdArray::numel_of(target_) != a.numel()) shape_error("reshape", a.shape, target_);
    return NdArray(target_, a.data);
  }

  void grad(std::span<const NdArray* const>, const NdArray&, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    if (!gin[0]) return;
    double* d = gin[0]->data.data();
    const double* g = gout.data.data();
    for (std::int64_t i = 0; i < gout.numel(); ++i) d[i] += g[i];
  }

 private:
  Shape target_;
};

class BroadcastToOp final : public OpNode {
 public:
  explicit BroadcastToOp(Shape target) : target_(std::move(target)) {}
  std::string_view kind() const override { return "broadcast"; }

  NdArray run(std::span<const NdArray* const> in) override {
    const NdArray& a = *in[0];
    plan_ = make_plan(a.shape, target_, kind());
    if (plan_.out != target_) shape_error("broadcast", a.shape, target_);
    NdArray out = NdArray::zeros(target_);
    const double* x = a.data.data();
    double* y = out.data.data();
    bcast_walk(plan_, [&](std::int64_t o, std::int64_t oa, std::int64_t) { y[o] = x[oa]; });
    return out;
  }

  void grad(std::span<const NdArray* const>, const NdArray&, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    if (!gin[0]) return;
    double* d = gin[0]->data.data();
    const double* g = gout.data.data();
    bcast_walk(plan_, [&](std::int64_t o, std::int64_t oa, std::int64_t) { d[oa] += g[o]; });
  }

 private:
  Shape target_;
  BcastPlan plan_;
};

class L2NormOp final : public OpNode {
 public:
  std::string_view kind() const override { return "l2_norm"; }

  NdArray run(std::span<const NdArray* const> in) override {
    double acc = 0.0;
    for (double v : in[0]->data) acc += v * v;
    return NdArray::scalar(std::sqrt(acc));
  }

  void grad(std::span<const NdArray* const> in, const NdArray& out, const NdArray& gout,
            std::span<NdArray* const> gin) override {
    if (!gin[0]) return;
    const double nrm = out[0];
    if (nrm == 0.0) return;  // subgradient 0 at the origin
    const double k = gout[0] / nrm;
    const double* x = in[0]->data.data();
    double* d = gin[0]->data.data();
    for (std::int64_t i = 0; i < in[0]->numel(); ++i) d[i] += k * x[i];
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// public builders
// ---------------------------------------------------------------------------

Var add(Var a, Var b) { return apply2(a, b, std::make_unique<BinaryOp>(BinKind::Add)); }
Var sub(Var a, Var b) { return apply2(a, b, std::make_unique<BinaryOp>(BinKind::Sub)); }
Var mul(Var a, Var b) { return apply2(a, b, std::make_unique<BinaryOp>(BinKind::Mul)); }
Var div(Var a, Var b) { return apply2(a, b, std::make_unique<BinaryOp>(BinKind::Div)); }
Var matmul(Var a, Var b) { return apply2(a, b, std::make_unique<MatmulOp>()); }
Var exp(Var a) { return apply1(a, std::make_unique<UnaryOp>(UnaryOp::K::Exp)); }
Var log(Var a) { return apply1(a, std::make_unique<UnaryOp>(UnaryOp::K::Log)); }
Var power(Var a, double p) { return apply1(a, std::make_unique<UnaryOp>(UnaryOp::K::Power, p)); }
Var sum(Var a) { return apply1(a, std::make_unique<ReduceOp>(ReduceOp::K::Sum, -1)); }
Var sum(Var a, int axis) { return apply1(a, std::make_unique<ReduceOp>(ReduceOp::K::Sum, axis)); }
Var mean(Var a) { return apply1(a, std::make_unique<ReduceOp>(ReduceOp::K::Mean, -1)); }
Var mean(Var a, int axis) { return apply1(a, std::make_unique<ReduceOp>(ReduceOp::K::Mean, axis)); }
Var max_along(Var a, int axis) { return apply1(a, std::make_unique<ReduceOp>(ReduceOp::K::Max, axis)); }
Var min_along(Var a, int axis) { return apply1(a, std::make_unique<ReduceOp>(ReduceOp::K::Min, axis)); }
Var softmax(Var a, int axis) { return apply1(a, std::make_unique<SoftmaxOp>(axis)); }
Var cosine_similarity(Var a, Var b) { return apply2(a, b, std::make_unique<CosineSimilarityOp>()); }
Var sigmoid(Var a) { return apply1(a, std::make_unique<UnaryOp>(UnaryOp::K::Sigmoid)); }
Var leaky_relu(Var a, double slope) {
  return apply1(a, std::make_unique<UnaryOp>(UnaryOp::K::LeakyRelu, slope));
}
Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input list");
  return parts[0].tape->apply(std::make_unique<ConcatOp>(axis), parts);
}
Var gather_rows(Var a, std::vector<std::int64_t> indices) {
  return apply1(a, std::make_unique<GatherRowsOp>(std::move(indices)));
}
Var reshape(Var a, Shape target) { return apply1(a, std::make_unique<ReshapeOp>(std::move(target))); }
Var broadcast_to(Var a, Shape target) {
  return apply1(a, std::make_unique<BroadcastToOp>(std::move(target)));
}
Var clamp(Var a, double lo, double hi) {
  return apply1(a, std::make_unique<UnaryOp>(UnaryOp::K::Clamp, lo, hi));
}
Var smooth_l1(Var a) { return apply1(a, std::make_unique<UnaryOp>(UnaryOp::K::SmoothL1)); }
Var l2_norm(Var a) { return apply1(a, std::make_unique<L2NormOp>()); }
Var transpose(Var a) { return apply1(a, std::make_unique<TransposeOp>()); }
Var affine(Var a, double k, double b) {
  return apply1(a, std::make_unique<UnaryOp>(UnaryOp::K::Affine, k, b));
}

Var scale(Var a, double k) { return affine(a, k, 0.0); }
Var neg(Var a) { return affine(a, -1.0, 0.0); }

Var tanh_bounded(Var a, double bound) {
  // bound * tanh(x) == 2*bound*sigmoid(2x) - bound
  return affine(sigmoid(scale(a, 2.0)), 2.0 * bound, -bound);
}

Var dot_rows(Var a, Var b) { return sum(mul(a, b), 1); }

Var cross_rows(Var a, Var b) {
  const auto& sa = a.tape->shape(a);
  if (sa.size() != 2 || sa[1] != 3) throw std::invalid_argument("cross_rows: expects [n,3]");
  auto roll = [](Var v, std::vector<std::int64_t> cols) {
    // column permutation of an [n,3] array via transpose + row gather
    return transpose(gather_rows(transpose(v), std::move(cols)));
  };
  Var a1 = roll(a, {1, 2, 0}), a2 = roll(a, {2, 0, 1});
  Var b1 = roll(b, {1, 2, 0}), b2 = roll(b, {2, 0, 1});
  return sub(mul(a1, b2), mul(a2, b1));
}

Var slice_rows(Var a, std::int64_t lo, std::int64_t hi) {
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(hi - lo));
  for (std::int64_t i = lo; i < hi; ++i) idx.push_back(i);
  return gather_rows(a, std::move(idx));
}

Var sqnorm_rows(Var a) { return sum(mul(a, a), 1); }

Shape broadcast_shape(const Shape& a, const Shape& b, std::string_view op) {
  return make_plan(a, b, op).out;
}

}  // namespace csepose::diff

#include "csepose/diff/gradcheck.hpp"

#include <cmath>

namespace csepose::diff {

double eval_scalar(const std::vector<NdArray>& points, const GraphBuilder& build) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(points.size());
  for (const auto& p : points) leaves.push_back(tape.leaf(p, true));
  Var loss = build(tape, leaves);
  const NdArray& v = tape.value(loss);
  if (v.numel() != 1) throw std::invalid_argument("grad_check: function is not scalar-valued");
  return v[0];
}

double grad_check(const std::vector<NdArray>& points, const GraphBuilder& build, double step) {
  // Analytic gradients at the base point.
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(points.size());
  for (const auto& p : points) leaves.push_back(tape.leaf(p, true));
  Var loss = build(tape, leaves);
  if (tape.value(loss).numel() != 1) throw std::invalid_argument("grad_check: function is not scalar-valued");
  tape.backward(loss);
  std::vector<NdArray> analytic;
  analytic.reserve(points.size());
  for (Var l : leaves) analytic.push_back(tape.grad_or_zero(l));

  double worst = 0.0;
  std::vector<NdArray> probe = points;
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    for (std::int64_t k = 0; k < points[pi].numel(); ++k) {
      const double saved = probe[pi][k];
      probe[pi][k] = saved + step;
      const double fp = eval_scalar(probe, build);
      probe[pi][k] = saved - step;
      const double fm = eval_scalar(probe, build);
      probe[pi][k] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw std::runtime_error("grad_check: non-finite function value at probe point");
      }
      const double fd = (fp - fm) / (2.0 * step);
      const double err = std::abs(analytic[pi][k] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

namespace {

NdArray rand_array(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  NdArray a = NdArray::zeros(std::move(shape));
  for (auto& v : a.data) v = rng.uniform(lo, hi);
  return a;
}

// Contract the op output against a fixed random functional so that every
// output entry influences the loss. The weights must be drawn before the
// builder runs: grad_check re-invokes the builder at perturbed points and the
// function has to stay the same.
Var against(Var out, NdArray weights) {
  return sum(mul(out, out.tape->constant(std::move(weights))));
}

// Push values away from a kink location by a margin.
void push_away(NdArray& a, double kink, double margin) {
  for (auto& v : a.data) {
    if (std::abs(v - kink) < margin) v = kink + (v >= kink ? margin : -margin);
  }
}

}  // namespace

std::vector<OpCheck> builtin_op_checks() {
  constexpr double kStep = 1e-5;
  constexpr double kMargin = 10 * kStep;
  std::vector<OpCheck> checks;
  auto add_check = [&](std::string name, std::function<double(Rng&)> f) {
    checks.push_back({std::move(name), std::move(f)});
  };

  add_check("add", [](Rng& rng) {
    auto a = rand_array(rng, {3, 4}), b = rand_array(rng, {3, 4});
    auto w = rand_array(rng, {3, 4}, 0.3, 1.7);
    return grad_check({a, b}, [w](Tape&, const std::vector<Var>& l) {
      return against(add(l[0], l[1]), w);
    });
  });
  add_check("sub", [](Rng& rng) {
    auto a = rand_array(rng, {3, 4}), b = rand_array(rng, {1, 4});  // broadcast path
    auto w = rand_array(rng, {3, 4}, 0.3, 1.7);
    return grad_check({a, b}, [w](Tape&, const std::vector<Var>& l) {
      return against(sub(l[0], l[1]), w);
    });
  });
  add_check("mul", [](Rng& rng) {
    auto a = rand_array(rng, {3, 4}), b = rand_array(rng, {3, 1});  // broadcast path
    auto w = rand_array(rng, {3, 4}, 0.3, 1.7);
    return grad_check({a, b}, [w](Tape&, const std::vector<Var>& l) {
      return against(mul(l[0], l[1]), w);
    });
  });
  add_check("div", [](Rng& rng) {
    auto a = rand_array(rng, {3, 4});
    auto b = rand_array(rng, {3, 4}, 0.5, 2.0);
    auto w = rand_array(rng, {3, 4}, 0.3, 1.7);
    return grad_check({a, b}, [w](Tape&, const std::vector<Var>& l) {
      return against(div(l[0], l[1]), w);
    });
  });
  add_check("matmul", [](Rng& rng) {
    auto a = rand_array(rng, {3, 4}), b = rand_array(rng, {4, 2});
    auto w = rand_array(rng, {3, 2}, 0.3, 1.7);
    return grad_check({a, b}, [w](Tape&, const std::vector<Var>& l) {
      return against(matmul(l[0], l[1]), w);
    });
  });
  add_check("exp", [](Rng& rng) {
    auto a = rand_array(rng, {2, 5});
    auto w = rand_array(rng, {2, 5}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) { return against(exp(l[0]), w); });
  });
  add_check("log", [](Rng& rng) {
    auto a = rand_array(rng, {2, 5}, 0.3, 2.5);
    auto w = rand_array(rng, {2, 5}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) { return against(log(l[0]), w); });
  });
  add_check("power", [](Rng& rng) {
    auto a = rand_array(rng, {2, 5}, 0.2, 2.0);
    auto w = rand_array(rng, {2, 5}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) { return against(power(l[0], 1.7), w); });
  });
  add_check("sum", [](Rng& rng) {
    auto a = rand_array(rng, {2, 3, 4});
    auto w = rand_array(rng, {2, 1, 4}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) {
      return add(sum(l[0]), against(sum(l[0], 1), w));
    });
  });
  add_check("mean", [](Rng& rng) {
    auto a = rand_array(rng, {2, 3, 4});
    auto w = rand_array(rng, {2, 3, 1}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) {
      return add(mean(l[0]), against(mean(l[0], 2), w));
    });
  });
  add_check("max", [](Rng& rng) {
    auto a = rand_array(rng, {4, 6});
    // ties are the kink; spread entries apart per reduction lane
    for (std::int64_t r = 0; r < 4; ++r) {
      for (std::int64_t c = 0; c < 6; ++c) a.at2(r, c) += 3.0 * kMargin * static_cast<double>(c);
    }
    auto w = rand_array(rng, {4, 1}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) {
      return against(max_along(l[0], 1), w);
    });
  });
  add_check("min", [](Rng& rng) {
    auto a = rand_array(rng, {4, 6});
    for (std::int64_t r = 0; r < 4; ++r) {
      for (std::int64_t c = 0; c < 6; ++c) a.at2(r, c) += 3.0 * kMargin * static_cast<double>(c);
    }
    auto w = rand_array(rng, {1, 6}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) {
      return against(min_along(l[0], 0), w);
    });
  });
  add_check("softmax", [](Rng& rng) {
    auto a = rand_array(rng, {3, 5}, -2.0, 2.0);
    auto w = rand_array(rng, {3, 5}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) { return against(softmax(l[0], 1), w); });
  });
  add_check("cosine_similarity", [](Rng& rng) {
    auto a = rand_array(rng, {4, 5}, 0.2, 1.0);
    auto b = rand_array(rng, {3, 5}, 0.2, 1.0);
    auto w = rand_array(rng, {4, 3}, 0.3, 1.7);
    return grad_check({a, b}, [w](Tape&, const std::vector<Var>& l) {
      return against(cosine_similarity(l[0], l[1]), w);
    });
  });
  add_check("sigmoid", [](Rng& rng) {
    auto a = rand_array(rng, {2, 6}, -3.0, 3.0);
    auto w = rand_array(rng, {2, 6}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) { return against(sigmoid(l[0]), w); });
  });
  add_check("leaky_relu", [](Rng& rng) {
    auto a = rand_array(rng, {3, 5});
    push_away(a, 0.0, kMargin);
    auto w = rand_array(rng, {3, 5}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) {
      return against(leaky_relu(l[0], 0.1), w);
    });
  });
  add_check("concat", [](Rng& rng) {
    auto a = rand_array(rng, {2, 3}), b = rand_array(rng, {2, 2}), c = rand_array(rng, {2, 4});
    auto w = rand_array(rng, {2, 9}, 0.3, 1.7);
    return grad_check({a, b, c}, [w](Tape&, const std::vector<Var>& l) {
      return against(concat({l[0], l[1], l[2]}, 1), w);
    });
  });
  add_check("gather_rows", [](Rng& rng) {
    auto a = rand_array(rng, {5, 3});
    auto w = rand_array(rng, {4, 3}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) {
      return against(gather_rows(l[0], {4, 0, 2, 2}), w);
    });
  });
  add_check("reshape", [](Rng& rng) {
    auto a = rand_array(rng, {2, 6});
    auto w = rand_array(rng, {3, 4}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) {
      return against(reshape(l[0], {3, 4}), w);
    });
  });
  add_check("broadcast", [](Rng& rng) {
    auto a = rand_array(rng, {1, 4});
    auto w = rand_array(rng, {3, 4}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) {
      return against(broadcast_to(l[0], {3, 4}), w);
    });
  });
  add_check("clamp", [](Rng& rng) {
    auto a = rand_array(rng, {3, 5}, -2.0, 2.0);
    push_away(a, -0.8, kMargin);
    push_away(a, 0.8, kMargin);
    auto w = rand_array(rng, {3, 5}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) {
      return against(clamp(l[0], -0.8, 0.8), w);
    });
  });
  add_check("smooth_l1", [](Rng& rng) {
    auto a = rand_array(rng, {3, 5}, -2.0, 2.0);
    push_away(a, 0.0, kMargin);
    push_away(a, 1.0, kMargin);
    push_away(a, -1.0, kMargin);
    auto w = rand_array(rng, {3, 5}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) { return against(smooth_l1(l[0]), w); });
  });
  add_check("l2_norm", [](Rng& rng) {
    auto a = rand_array(rng, {7}, 0.2, 1.0);
    const double k = rng.uniform(0.5, 1.5);
    return grad_check({a}, [k](Tape&, const std::vector<Var>& l) { return scale(l2_norm(l[0]), k); });
  });
  add_check("transpose", [](Rng& rng) {
    auto a = rand_array(rng, {3, 5});
    auto w = rand_array(rng, {5, 3}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) { return against(transpose(l[0]), w); });
  });
  add_check("affine", [](Rng& rng) {
    auto a = rand_array(rng, {3, 5});
    auto w = rand_array(rng, {3, 5}, 0.3, 1.7);
    return grad_check({a}, [w](Tape&, const std::vector<Var>& l) {
      return against(affine(l[0], 1.3, -0.4), w);
    });
  });
  return checks;
}

}  // namespace csepose::diff

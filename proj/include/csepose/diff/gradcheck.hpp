#pragma once

#include <functional>
#include <string>
#include <vector>

#include "csepose/core/rng.hpp"
#include "csepose/diff/ops.hpp"

namespace csepose::diff {

// Builds a scalar loss from leaf vars created for `points` (same order).
using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

double eval_scalar(const std::vector<NdArray>& points, const GraphBuilder& build);

// Central-difference verification oracle: max over all input coordinates of
// |analytic - fd| / max(1, |fd|). Throws if the function is non-finite at any
// probe point.
double grad_check(const std::vector<NdArray>& points, const GraphBuilder& build, double step = 1e-5);

// One randomized trial for a registered op; returns the max relative error.
struct OpCheck {
  std::string name;
  std::function<double(Rng&)> trial;
};

// Checks covering every diffcore op kind. Kinked ops draw inputs at least
// 10x the fd step away from their kinks.
std::vector<OpCheck> builtin_op_checks();

}  // namespace csepose::diff

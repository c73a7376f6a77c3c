#include "csepose/diff/optim.hpp"

#include <cmath>
#include <set>

namespace csepose::diff {

double AdamW::decay_factor() const {
  if (cfg_.horizon <= 0) return 1.0;
  const double frac = std::min(1.0, static_cast<double>(step_) / static_cast<double>(cfg_.horizon));
  return 0.5 * (1.0 + std::cos(M_PI * frac));
}

std::vector<std::string> AdamW::step(ParamStore& store, const std::vector<const NdArray*>& grads) {
  if (grads.size() != store.size()) {
    throw std::invalid_argument("AdamW: gradient list size does not match parameter store");
  }
  if (state_.size() != store.size()) {
    state_.clear();
    state_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      state_.push_back({NdArray::zeros(store.entry(i).value.shape),
                        NdArray::zeros(store.entry(i).value.shape)});
    }
  }

  // A non-finite gradient anywhere in a group poisons that whole group's step.
  std::set<std::string> bad_groups;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (grads[i] && !grads[i]->all_finite()) bad_groups.insert(store.entry(i).group);
  }

  const double lr_decay = decay_factor();
  const std::int64_t t = step_ + 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));

  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& e = store.entry(i);
    if (!grads[i] || bad_groups.count(e.group)) continue;
    if (!grads[i]->same_shape(e.value)) {
      throw std::invalid_argument("AdamW: gradient shape mismatch for '" + e.name + "'");
    }
    const double lr = base_rate(e.group) * lr_decay;
    auto& mom = state_[i];
    const double* g = grads[i]->data.data();
    double* m = mom.m.data.data();
    double* v = mom.v.data.data();
    double* p = e.value.data.data();
    const std::int64_t n = e.value.numel();
    for (std::int64_t k = 0; k < n; ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      p[k] -= lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * p[k]);
    }
  }
  ++step_;
  return std::vector<std::string>(bad_groups.begin(), bad_groups.end());
}

}  // namespace csepose::diff

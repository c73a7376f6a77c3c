#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "csepose/diff/params.hpp"

namespace csepose::diff {

// Decoupled weight decay Adam with cosine learning-rate decay to zero over a
// fixed horizon. Parameter groups carry their own base rate ("deform" runs at
// a tenth of "main" by default, following the training recipe).
struct OptimizerConfig {
  double lr_main = 1e-4;
  double lr_deform = 1e-5;
  double beta1 = 0.9;        // not a tuned value; see run config
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::int64_t horizon = 2000;  // cosine decay reaches 0 here (no warmup)
};

class AdamW {
 public:
  explicit AdamW(const OptimizerConfig& cfg) : cfg_(cfg) {}

  std::int64_t step_count() const { return step_; }
  double base_rate(const std::string& group) const {
    return group == "deform" ? cfg_.lr_deform : cfg_.lr_main;
  }
  // Cosine factor for the step that would be taken next.
  double decay_factor() const;
  double effective_rate(const std::string& group) const { return base_rate(group) * decay_factor(); }

  // Applies one update. grads[i] pairs with store.entry(i); a null grad means
  // "no gradient this step" (parameter left untouched, moments left alone).
  // Groups containing any non-finite gradient are skipped; their names are
  // returned so the caller can log the event.
  std::vector<std::string> step(ParamStore& store, const std::vector<const NdArray*>& grads);

 private:
  struct Moments {
    NdArray m, v;
  };
  OptimizerConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<Moments> state_;
};

}  // namespace csepose::diff

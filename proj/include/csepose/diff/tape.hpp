#pragma once

#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "csepose/diff/ndarray.hpp"

namespace csepose::diff {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// One differentiable operation. Implementations may cache forward byproducts
// in members; each OpNode instance belongs to exactly one tape node.
class OpNode {
 public:
  virtual ~OpNode() = default;
  virtual std::string_view kind() const = 0;
  virtual NdArray run(std::span<const NdArray* const> inputs) = 0;
  // Accumulate input gradients. gin[i] is null when input i needs no gradient.
  // `out` is the cached forward value, `gout` the output gradient.
  virtual void grad(std::span<const NdArray* const> inputs, const NdArray& out, const NdArray& gout,
                    std::span<NdArray* const> gin) = 0;
  // Ops whose output can contain legitimate non-finite-looking edge cases can
  // opt out of the global finiteness check (none do today).
  virtual bool check_finite() const { return true; }
};

// Append-only computation tape. Forward values are computed eagerly at
// apply(); backward() walks the node sequence in reverse. Single-threaded by
// contract; build one tape per training iteration.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf holding its own value. trainable marks it as a parameter leaf.
  Var leaf(NdArray value, bool trainable = false);
  // Leaf borrowing an external value (e.g. a ParamStore entry). The pointee
  // must outlive the tape and stay unmodified until backward() is done.
  Var borrowed_leaf(const NdArray* value, bool trainable);
  Var constant(NdArray value) { return leaf(std::move(value), false); }

  Var apply(std::unique_ptr<OpNode> op, std::initializer_list<Var> inputs);
  Var apply(std::unique_ptr<OpNode> op, const std::vector<Var>& inputs);

  const NdArray& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape; }

  // Reverse pass from a scalar loss. Clears previous gradients first.
  void backward(Var loss);

  // Gradient of the last backward() at node v; null if v was unreachable or
  // does not require grad. Unreachable trainable leaves read as zeros via
  // grad_or_zero.
  const NdArray* grad(Var v) const;
  NdArray grad_or_zero(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  std::string_view kind_of(Var v) const;

 private:
  struct Node {
    std::unique_ptr<OpNode> op;  // null for leaves
    std::vector<std::int32_t> inputs;
    NdArray value;                       // owned value (leaves and op outputs)
    const NdArray* external = nullptr;   // set for borrowed leaves
    NdArray grad;
    bool has_grad = false;
    bool wants_grad = false;
  };

  const NdArray& node_value(const Node& n) const { return n.external ? *n.external : n.value; }
  void check_var(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace csepose::diff

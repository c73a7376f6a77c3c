#include "csepose/diff/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace csepose::diff {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool NdArray::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Var Tape::leaf(NdArray value, bool trainable) {
  Node n;
  n.value = std::move(value);
  n.wants_grad = trainable;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::borrowed_leaf(const NdArray* value, bool trainable) {
  if (value == nullptr) throw std::invalid_argument("tape: borrowed leaf is null");
  Node n;
  n.external = value;
  n.wants_grad = trainable;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::apply(std::unique_ptr<OpNode> op, std::initializer_list<Var> inputs) {
  return apply(std::move(op), std::vector<Var>(inputs));
}

Var Tape::apply(std::unique_ptr<OpNode> op, const std::vector<Var>& inputs) {
  Node n;
  n.inputs.reserve(inputs.size());
  std::vector<const NdArray*> in_values;
  in_values.reserve(inputs.size());
  for (Var v : inputs) {
    check_var(v);
    if (v.tape != this) throw std::invalid_argument("tape: input from a different tape");
    n.inputs.push_back(v.id);
    n.wants_grad = n.wants_grad || nodes_[static_cast<std::size_t>(v.id)].wants_grad;
    in_values.push_back(&node_value(nodes_[static_cast<std::size_t>(v.id)]));
  }
  n.value = op->run(std::span<const NdArray* const>(in_values.data(), in_values.size()));
  if (op->check_finite() && !n.value.all_finite()) {
    throw std::runtime_error(std::string("tape: non-finite output from op '") + std::string(op->kind()) +
                             "'");
  }
  n.op = std::move(op);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

const NdArray& Tape::value(Var v) const {
  check_var(v);
  return node_value(nodes_[static_cast<std::size_t>(v.id)]);
}

std::string_view Tape::kind_of(Var v) const {
  check_var(v);
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.op ? n.op->kind() : std::string_view("leaf");
}

void Tape::backward(Var loss) {
  check_var(loss);
  if (loss.tape != this) throw std::invalid_argument("tape: loss from a different tape");
  const Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
  if (node_value(ln).numel() != 1) {
    throw std::invalid_argument("tape: backward requires a scalar loss, got shape " +
                                shape_str(node_value(ln).shape));
  }

  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = NdArray();
  }

  auto& seed = nodes_[static_cast<std::size_t>(loss.id)];
  seed.grad = NdArray::full(node_value(seed).shape, 1.0);
  seed.has_grad = true;

  std::vector<const NdArray*> in_values;
  std::vector<NdArray*> in_grads;
  for (std::int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.op || !n.has_grad || !n.wants_grad) continue;
    in_values.clear();
    in_grads.clear();
    for (std::int32_t src : n.inputs) {
      Node& s = nodes_[static_cast<std::size_t>(src)];
      in_values.push_back(&node_value(s));
      if (!s.wants_grad) {
        in_grads.push_back(nullptr);
        continue;
      }
      if (!s.has_grad) {
        s.grad = NdArray::zeros(node_value(s).shape);
        s.has_grad = true;
      }
      in_grads.push_back(&s.grad);
    }
    n.op->grad(std::span<const NdArray* const>(in_values.data(), in_values.size()), node_value(n), n.grad,
               std::span<NdArray* const>(in_grads.data(), in_grads.size()));
  }
}

const NdArray* Tape::grad(Var v) const {
  check_var(v);
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.has_grad ? &n.grad : nullptr;
}

NdArray Tape::grad_or_zero(Var v) const {
  const NdArray* g = grad(v);
  if (g) return *g;
  return NdArray::zeros(value(v).shape);
}

void Tape::check_var(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::invalid_argument("tape: invalid var handle");
  }
}

}  // namespace csepose::diff

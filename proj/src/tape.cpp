#include "kgnn/tape.hpp"

#include "kgnn/error.hpp"

namespace kgnn {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Tensor value, bool requires_grad, Backprop backprop) {
  nodes_.push_back(Node{std::move(value), std::nullopt, requires_grad, std::move(backprop)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

Var Tape::variable(Tensor value) { return push(std::move(value), true, {}); }

Var Tape::parameter(const ParamKey& key, Tensor value, bool requires_grad) {
  if (auto it = param_index_.find(key); it != param_index_.end()) return Var(this, it->second);
  Var v = push(std::move(value), requires_grad, {});
  param_index_.emplace(key, v.id());
  return v;
}

std::optional<Var> Tape::find_parameter(const ParamKey& key) const {
  auto it = param_index_.find(key);
  if (it == param_index_.end()) return std::nullopt;
  return Var(const_cast<Tape*>(this), it->second);
}

Var Tape::record(std::string_view op, Tensor value, const std::vector<Var>& inputs, Backprop backprop) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
  bool needs_grad = false;
  for (const auto& in : inputs) {
    if (in.tape_ != this) throw ContractError(std::string(op) + ": input from a different tape");
    needs_grad = needs_grad || in.requires_grad();
  }
  return push(std::move(value), needs_grad, needs_grad ? std::move(backprop) : Backprop{});
}

void Tape::accumulate(const Var& v, const Tensor& grad) {
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) return;
  if (grad.size() != node.value.size()) {
    throw DimensionError("gradient " + shape_string(grad.shape()) + " for node " +
                         shape_string(node.value.shape()));
  }
  if (!node.grad) {
    node.grad = grad.shape() == node.value.shape() ? grad : grad.reshaped(node.value.shape());
  } else {
    auto dst = node.grad->data();
    auto src = grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

GradientMap Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss from a different tape");
  const Tensor& lv = loss.value();
  if (lv.rank() != 0) throw ContractError("backward: loss must be a scalar, got " + shape_string(lv.shape()));
  for (auto& n : nodes_) n.grad.reset();
  if (!nodes_[loss.id_].requires_grad) return {};

  nodes_[loss.id_].grad = Tensor::scalar(1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.grad || !node.backprop) continue;
    // Copy: backprop may push into deque nodes, which keeps references valid,
    // but the gradient itself must not alias a buffer we are writing into.
    const Tensor g = *node.grad;
    node.backprop(*this, g);
  }

  GradientMap out;
  for (const auto& [key, id] : param_index_) {
    const Node& node = nodes_[id];
    if (node.grad && !node.grad->all_zero()) out.emplace(key, *node.grad);
  }
  return out;
}

Tensor Tape::gradient(const Var& v) const {
  const Node& node = nodes_[v.id_];
  if (node.grad) return *node.grad;
  return Tensor::zeros_like(node.value);
}

}  // namespace kgnn

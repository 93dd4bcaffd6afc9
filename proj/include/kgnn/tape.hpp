#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgnn/params.hpp"
#include "kgnn/tensor.hpp"

namespace kgnn {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode record. Nodes are appended in evaluation order; backward walks them
// in exact reverse order. Nodes whose inputs do not require grad are stored as
// plain values with no backward closure.
class Tape {
 public:
  // Receives the node's accumulated output gradient and pushes into its inputs.
  using Backprop = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Registers a keyed leaf. Registering the same key twice returns the first node.
  Var parameter(const ParamKey& key, Tensor value, bool requires_grad = true);
  std::optional<Var> find_parameter(const ParamKey& key) const;

  // Appends an op result. `backprop` is dropped when no input requires grad.
  Var record(std::string_view op, Tensor value, const std::vector<Var>& inputs, Backprop backprop);

  // Adds `grad` into the gradient buffer of `v` (no-op if v does not require grad).
  void accumulate(const Var& v, const Tensor& grad);

  // Runs reverse accumulation from a scalar loss. Returns gradients of keyed
  // parameters reached from the loss; all-zero gradients are elided.
  GradientMap backward(const Var& loss);

  // Gradient of any node after backward(); zeros if nothing reached it.
  Tensor gradient(const Var& v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  const std::map<ParamKey, std::size_t>& parameters() const { return param_index_; }

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    Backprop backprop;
  };

  Var push(Tensor value, bool requires_grad, Backprop backprop);

  std::deque<Node> nodes_;
  std::map<ParamKey, std::size_t> param_index_;
};

}  // namespace kgnn

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tgrec/autodiff/params.hpp"
#include "tgrec/autodiff/tensor.hpp"

namespace tgrec::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  [[nodiscard]] auto value() const -> const Tensor&;
  [[nodiscard]] auto shape() const -> const Shape&;
  [[nodiscard]] auto requires_grad() const -> bool;
  [[nodiscard]] auto id() const -> std::size_t { return id_; }
  [[nodiscard]] auto tape() const -> Tape* { return tape_; }
  [[nodiscard]] auto valid() const -> bool { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records forward operations in execution order so that backward() can walk
// them in reverse. Every input of node k has an index < k.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  auto operator=(const Tape&) -> Tape& = delete;

  auto constant(Tensor value) -> Var;
  auto variable(Tensor value) -> Var;
  // Leaf bound to a named parameter; repeated calls return the same Var.
  auto param(const ModelParams& params, const std::string& name) -> Var;

  // Appends an op node. The backward closure is kept only when gradients are
  // enabled and at least one input requires them.
  auto record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn)
      -> Var;

  // Reverse pass from a scalar loss. Clears gradients from any earlier call,
  // so calling it twice yields identical results.
  void backward(const Var& loss);

  [[nodiscard]] auto grad(const Var& v) const -> Tensor;
  // Gradient for every parameter in `params`; zeros for those that never
  // touched this tape.
  [[nodiscard]] auto gradients(const ModelParams& params) const -> Gradients;

  [[nodiscard]] auto value(std::size_t id) const -> const Tensor& {
    return nodes_[id].value;
  }
  [[nodiscard]] auto requires_grad(std::size_t id) const -> bool {
    return nodes_[id].requires_grad;
  }
  [[nodiscard]] auto inputs(std::size_t id) const
      -> const std::vector<std::size_t>& {
    return nodes_[id].inputs;
  }
  // Zero-initialised on first access.
  auto grad_buffer(std::size_t id) -> Tensor&;

  [[nodiscard]] auto size() const -> std::size_t { return nodes_.size(); }
  [[nodiscard]] auto grad_enabled() const -> bool { return grad_enabled_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  auto push(Node node) -> Var;

  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::map<std::string, std::size_t> param_ids_;
};

}  // namespace tgrec::ad

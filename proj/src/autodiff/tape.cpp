#include "tgrec/autodiff/tape.hpp"

#include <stdexcept>

namespace tgrec::ad {

auto Var::value() const -> const Tensor& { return tape_->value(id_); }
auto Var::shape() const -> const Shape& { return value().shape(); }
auto Var::requires_grad() const -> bool { return tape_->requires_grad(id_); }

auto Tape::push(Node node) -> Var {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

auto Tape::constant(Tensor value) -> Var {
  return push(Node{std::move(value), {}, false, {}, {}});
}

auto Tape::variable(Tensor value) -> Var {
  return push(Node{std::move(value), {}, grad_enabled_, {}, {}});
}

auto Tape::param(const ModelParams& params, const std::string& name) -> Var {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) {
    return Var(this, it->second);
  }
  Var v = variable(params.get(name));
  param_ids_.emplace(name, v.id());
  return v;
}

auto Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn)
    -> Var {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  bool any = false;
  for (const auto& in : inputs) {
    if (in.tape() != this) {
      throw std::invalid_argument("op inputs live on different tapes");
    }
    node.inputs.push_back(in.id());
    any = any || nodes_[in.id()].requires_grad;
  }
  node.requires_grad = grad_enabled_ && any;
  if (node.requires_grad) node.backward = std::move(fn);
  return push(std::move(node));
}

auto Tape::grad_buffer(std::size_t id) -> Tensor& {
  auto& node = nodes_[id];
  if (node.grad.empty() && !node.value.empty()) {
    node.grad = Tensor(node.value.shape(), 0.0);
  }
  return node.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) {
    throw std::invalid_argument("loss is not recorded on this tape");
  }
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got shape " +
                                shape_to_string(loss.shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor();
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
  }
}

auto Tape::grad(const Var& v) const -> Tensor {
  const auto& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor(node.value.shape(), 0.0);
  return node.grad;
}

auto Tape::gradients(const ModelParams& params) const -> Gradients {
  Gradients out;
  for (const auto& [name, value] : params) {
    auto it = param_ids_.find(name);
    if (it == param_ids_.end() || nodes_[it->second].grad.empty()) {
      out.emplace(name, Tensor(value.shape(), 0.0));
    } else {
      out.emplace(name, nodes_[it->second].grad);
    }
  }
  return out;
}

}  // namespace tgrec::ad

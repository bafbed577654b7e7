#include "tgrec/autodiff/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace tgrec::ad {

void Adam::step(ModelParams& params, const Gradients& grads) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) {
      throw std::invalid_argument("gradient for unknown parameter " + name);
    }
    if (params.get(name).shape() != g.shape()) {
      throw std::invalid_argument("gradient shape " + shape_to_string(g.shape()) +
                                  " does not match parameter " + name + " " +
                                  shape_to_string(params.get(name).shape()));
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (const auto& [name, g] : grads) {
    auto [it, inserted] = moments_.try_emplace(name);
    if (inserted) {
      it->second.first = Tensor(g.shape(), 0.0);
      it->second.second = Tensor(g.shape(), 0.0);
    }
    auto& m = it->second.first;
    auto& v = it->second.second;
    auto p = params.mutable_values(name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Adam::reset() {
  steps_ = 0;
  moments_.clear();
}

}  // namespace tgrec::ad

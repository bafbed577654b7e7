#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tgrec/autodiff/params.hpp"

namespace tgrec::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias-corrected moments. Moments are created lazily per parameter
// name on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ModelParams& params, const Gradients& grads);

  [[nodiscard]] auto config() const -> const AdamConfig& { return config_; }
  [[nodiscard]] auto step_count() const -> std::int64_t { return steps_; }
  void reset();

 private:
  struct Moments {
    Tensor first;
    Tensor second;
  };

  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace tgrec::ad

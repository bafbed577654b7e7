#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "tgrec/autodiff/tensor.hpp"

namespace tgrec::ad {

using Gradients = std::map<std::string, Tensor>;

// Named trainable weights, e.g. "memory.gru.W_z". Iteration order is the
// lexicographic name order, which keeps optimizers and checkpoints
// deterministic.
class ModelParams {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor init);
  [[nodiscard]] auto contains(const std::string& name) const -> bool;
  [[nodiscard]] auto get(const std::string& name) const -> const Tensor&;
  // Replaces values; the shape must match the registered one.
  void set(const std::string& name, Tensor value);
  auto mutable_values(const std::string& name) -> std::span<double>;

  [[nodiscard]] auto size() const -> std::size_t { return params_.size(); }
  [[nodiscard]] auto num_scalars() const -> std::size_t;
  [[nodiscard]] auto begin() const { return params_.begin(); }
  [[nodiscard]] auto end() const { return params_.end(); }

  friend auto operator==(const ModelParams&, const ModelParams&)
      -> bool = default;

 private:
  Map params_;
};

using Rng = std::mt19937_64;

// Uniform Glorot init for a rows x cols matrix.
auto glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) -> Tensor;
// Uniform(-scale, scale) of arbitrary shape.
auto uniform_tensor(const Shape& shape, double scale, Rng& rng) -> Tensor;
// Stable across standard-library implementations, unlike
// std::uniform_real_distribution.
auto uniform01(Rng& rng) -> double;
auto uniform_index(Rng& rng, std::uint64_t n) -> std::uint64_t;

}  // namespace tgrec::ad

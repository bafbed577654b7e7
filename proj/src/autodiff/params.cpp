#include "tgrec/autodiff/params.hpp"

#include <cmath>
#include <stdexcept>

namespace tgrec::ad {

void ModelParams::add(const std::string& name, Tensor init) {
  if (!params_.emplace(name, std::move(init)).second) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
}

auto ModelParams::contains(const std::string& name) const -> bool {
  return params_.count(name) != 0;
}

auto ModelParams::get(const std::string& name) const -> const Tensor& {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  return it->second;
}

void ModelParams::set(const std::string& name, Tensor value) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  if (it->second.shape() != value.shape()) {
    throw std::invalid_argument(
        "shape mismatch for " + name + ": expected " +
        shape_to_string(it->second.shape()) + ", got " +
        shape_to_string(value.shape()));
  }
  it->second = std::move(value);
}

auto ModelParams::mutable_values(const std::string& name) -> std::span<double> {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  return it->second.data();
}

auto ModelParams::num_scalars() const -> std::size_t {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

auto uniform01(Rng& rng) -> double {
  // 53 random mantissa bits.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

auto uniform_index(Rng& rng, std::uint64_t n) -> std::uint64_t {
  if (n == 0) throw std::invalid_argument("uniform_index over empty range");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = Rng::max() - Rng::max() % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

auto uniform_tensor(const Shape& shape, double scale, Rng& rng) -> Tensor {
  Tensor t(shape, 0.0);
  for (double& v : t.data()) v = (2.0 * uniform01(rng) - 1.0) * scale;
  return t;
}

auto glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) -> Tensor {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return uniform_tensor({rows, cols}, limit, rng);
}

}  // namespace tgrec::ad

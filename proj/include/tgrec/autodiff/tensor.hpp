#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tgrec::ad {

using Shape = std::vector<std::size_t>;

auto shape_size(const Shape& shape) -> std::size_t;
auto shape_to_string(const Shape& shape) -> std::string;

// Dense row-major array of doubles. Rank 0 (scalar), 1 (vector) and
// 2 (matrix) are the only ranks the op set produces.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static auto scalar(double value) -> Tensor;
  static auto vector(std::vector<double> values) -> Tensor;
  static auto matrix(std::size_t rows, std::size_t cols,
                     std::vector<double> values) -> Tensor;
  static auto matrix(std::initializer_list<std::initializer_list<double>> rows)
      -> Tensor;

  [[nodiscard]] auto shape() const -> const Shape& { return shape_; }
  [[nodiscard]] auto rank() const -> std::size_t { return shape_.size(); }
  [[nodiscard]] auto size() const -> std::size_t { return data_.size(); }
  [[nodiscard]] auto empty() const -> bool { return data_.empty(); }

  // Rows/cols of the 2-D view: a vector is one row, a scalar is 1x1.
  [[nodiscard]] auto rows() const -> std::size_t;
  [[nodiscard]] auto cols() const -> std::size_t;

  auto operator[](std::size_t i) -> double& { return data_[i]; }
  auto operator[](std::size_t i) const -> double { return data_[i]; }
  auto at(std::size_t r, std::size_t c) -> double& {
    return data_[r * cols() + c];
  }
  [[nodiscard]] auto at(std::size_t r, std::size_t c) const -> double {
    return data_[r * cols() + c];
  }
  [[nodiscard]] auto item() const -> double;

  auto data() -> std::span<double> { return data_; }
  [[nodiscard]] auto data() const -> std::span<const double> { return data_; }
  [[nodiscard]] auto values() const -> const std::vector<double>& {
    return data_;
  }
  [[nodiscard]] auto row(std::size_t r) const -> std::span<const double>;
  auto row(std::size_t r) -> std::span<double>;

  void fill(double value);
  [[nodiscard]] auto all_finite() const -> bool;

  friend auto operator==(const Tensor&, const Tensor&) -> bool = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace tgrec::ad

#include "tgrec/autodiff/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tgrec::ad {

auto shape_size(const Shape& shape) -> std::size_t {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

auto shape_to_string(const Shape& shape) -> std::string {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " +
                                shape_to_string(shape_));
  }
  if (shape_.size() > 2) {
    throw std::invalid_argument("tensors of rank > 2 are not supported");
  }
}

auto Tensor::scalar(double value) -> Tensor { return Tensor({}, {value}); }

auto Tensor::vector(std::vector<double> values) -> Tensor {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

auto Tensor::matrix(std::size_t rows, std::size_t cols,
                    std::vector<double> values) -> Tensor {
  return Tensor({rows, cols}, std::move(values));
}

auto Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows)
    -> Tensor {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

auto Tensor::rows() const -> std::size_t {
  return shape_.size() == 2 ? shape_[0] : 1;
}

auto Tensor::cols() const -> std::size_t {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  return 1;
}

auto Tensor::item() const -> double {
  if (data_.size() != 1) {
    throw std::invalid_argument("item() on tensor of shape " +
                                shape_to_string(shape_));
  }
  return data_[0];
}

auto Tensor::row(std::size_t r) const -> std::span<const double> {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

auto Tensor::row(std::size_t r) -> std::span<double> {
  return std::span<double>(data_).subspan(r * cols(), cols());
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

auto Tensor::all_finite() const -> bool {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace tgrec::ad

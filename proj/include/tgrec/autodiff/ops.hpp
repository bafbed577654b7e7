#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tgrec/autodiff/tape.hpp"

// Differentiable op set. Every op validates shapes (std::invalid_argument),
// rejects non-finite results (NumericError) and records itself on the tape of
// its first input. Broadcasting exists only for bias-add.
namespace tgrec::ad {

auto matmul(const Var& a, const Var& b) -> Var;
// Same-shape add, or matrix [m x n] + bias vector [n] added to every row.
auto add(const Var& a, const Var& b) -> Var;
auto sub(const Var& a, const Var& b) -> Var;
auto mul(const Var& a, const Var& b) -> Var;
auto scale(const Var& a, double factor) -> Var;
auto add_scalar(const Var& a, double offset) -> Var;

// axis 0 stacks rows, axis 1 joins columns. Vectors only support axis 0.
auto concat(const std::vector<Var>& parts, std::size_t axis) -> Var;
auto slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end)
    -> Var;
auto reshape(const Var& a, Shape shape) -> Var;

auto sigmoid(const Var& a) -> Var;
auto tanh(const Var& a) -> Var;
auto relu(const Var& a) -> Var;
auto cos(const Var& a) -> Var;
auto log(const Var& a) -> Var;
// log(sigmoid(x)) without underflow for large negative x.
auto log_sigmoid(const Var& a) -> Var;

// Softmax over `axis` of a matrix (or the whole vector).
auto softmax(const Var& a, std::size_t axis) -> Var;
// Row-wise softmax of an [N x n] matrix restricted to entries whose mask is
// nonzero. Masked entries get exactly 0; fully masked rows are all zero.
auto masked_softmax(const Var& a, std::span<const std::uint8_t> mask) -> Var;

auto sum(const Var& a) -> Var;
auto sum(const Var& a, std::size_t axis) -> Var;
auto mean(const Var& a) -> Var;
auto mean(const Var& a, std::size_t axis) -> Var;
auto dot(const Var& a, const Var& b) -> Var;
auto cosine(const Var& a, const Var& b) -> Var;

// Rows of `a` at `indices` (repeats allowed).
auto gather_rows(const Var& a, std::span<const std::size_t> indices) -> Var;
// Copy of `base` whose rows at `rows` are replaced by the rows of `values`.
auto overwrite_rows(const Var& base, std::span<const std::size_t> rows,
                    const Var& values) -> Var;

// Grouped products for neighbour attention. `keys` holds `group` rows per
// query row: out[i][j] = <queries[i], keys[i*group + j]>.
auto batched_row_dot(const Var& queries, const Var& keys, std::size_t group)
    -> Var;
// out[i] = sum_j weights[i][j] * values[i*group + j].
auto batched_weighted_sum(const Var& weights, const Var& values,
                          std::size_t group) -> Var;

// Plain kernel used by matmul; exposed for oracles and no-tape callers.
// Each output element accumulates over k in ascending order, independent of
// the number of rows.
void matmul_kernel(std::span<const double> a, std::span<const double> b,
                   std::span<double> out, std::size_t m, std::size_t k,
                   std::size_t n);

}  // namespace tgrec::ad

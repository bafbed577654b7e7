#include "tgrec/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tgrec/errors.hpp"

namespace tgrec::ad {

namespace {

auto tape_of(const Var& a) -> Tape& {
  if (!a.valid()) throw std::invalid_argument("op on an unbound Var");
  return *a.tape();
}

void ensure_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.value().rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " +
                                std::to_string(rank) + ", got shape " +
                                shape_to_string(a.shape()));
  }
}

// out[m x k] += g[m x n] * b[k x n]^T
void matmul_nt_accumulate(std::span<const double> g, std::span<const double> b,
                          std::span<double> out, std::size_t m, std::size_t n,
                          std::size_t k) {
  std::vector<double> bt(n * k);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  }
  std::vector<double> tmp(m * k);
  matmul_kernel(g, bt, tmp, m, n, k);
  for (std::size_t i = 0; i < m * k; ++i) out[i] += tmp[i];
}

// out[k x n] += a[m x k]^T * g[m x n]
void matmul_tn_accumulate(std::span<const double> a, std::span<const double> g,
                          std::span<double> out, std::size_t m, std::size_t k,
                          std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      double* orow = out.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * grow[j];
    }
  }
}

template <typename Fwd, typename Deriv>
auto unary(const Var& a, const char* name, Fwd fwd, Deriv deriv) -> Var {
  Tape& tape = tape_of(a);
  Tensor out(a.shape(), 0.0);
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  ensure_finite(out, name);
  const std::size_t in = a.id();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {a},
                     [in, self, deriv](Tape& t, const Tensor& g) {
                       const auto& xv = t.value(in);
                       const auto& yv = t.value(self);
                       auto& gx = t.grad_buffer(in);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         gx[i] += g[i] * deriv(xv[i], yv[i]);
                       }
                     });
}

// Iterates the lanes of a softmax over `axis`: calls fn(offset, stride, len).
template <typename Fn>
void for_each_lane(const Tensor& t, std::size_t axis, Fn fn) {
  if (t.rank() == 1) {
    fn(0, 1, t.size());
  } else if (axis == 1) {
    for (std::size_t r = 0; r < t.rows(); ++r) fn(r * t.cols(), 1, t.cols());
  } else {
    for (std::size_t c = 0; c < t.cols(); ++c) fn(c, t.cols(), t.rows());
  }
}

auto reduce_shape(const Tensor& t, std::size_t axis) -> Shape {
  if (t.rank() == 1) return {};
  return axis == 0 ? Shape{t.cols()} : Shape{t.rows()};
}

}  // namespace

void matmul_kernel(std::span<const double> a, std::span<const double> b,
                   std::span<double> out, std::size_t m, std::size_t k,
                   std::size_t n) {
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
  std::size_t i = 0;
  // Four output rows share each load of a row of b.
  for (; i + 4 <= m; i += 4) {
    double* c0 = out.data() + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a0 = a[i * k + p];
      const double a1 = a[(i + 1) * k + p];
      const double a2 = a[(i + 2) * k + p];
      const double a3 = a[(i + 3) * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bj = brow[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    double* c0 = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a0 = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) c0[j] += a0 * brow[j];
    }
  }
}

auto matmul(const Var& a, const Var& b) -> Var {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.value().rows();
  const std::size_t k = a.value().cols();
  const std::size_t n = b.value().cols();
  if (b.value().rows() != k) {
    throw std::invalid_argument("matmul: inner dimensions differ " +
                                shape_to_string(a.shape()) + " * " +
                                shape_to_string(b.shape()));
  }
  Tensor out({m, n}, 0.0);
  matmul_kernel(a.value().data(), b.value().data(), out.data(), m, k, n);
  ensure_finite(out, "matmul");
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape_of(a).record(
      std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) {
          matmul_nt_accumulate(g.data(), t.value(ib).data(),
                               t.grad_buffer(ia).data(), m, n, k);
        }
        if (t.requires_grad(ib)) {
          matmul_tn_accumulate(t.value(ia).data(), g.data(),
                               t.grad_buffer(ib).data(), m, k, n);
        }
      });
}

auto add(const Var& a, const Var& b) -> Var {
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  if (av.rank() == 2 && bv.rank() == 1 && bv.size() == av.cols()) {
    Tensor out = av;
    const std::size_t rows = av.rows();
    const std::size_t cols = av.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += bv[c];
    }
    ensure_finite(out, "add");
    return tape_of(a).record(
        std::move(out), {a, b}, [ia, ib, rows, cols](Tape& t, const Tensor& g) {
          if (t.requires_grad(ia)) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
          }
          if (t.requires_grad(ib)) {
            auto& gb = t.grad_buffer(ib);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
            }
          }
        });
  }
  require_same_shape(a, b, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  ensure_finite(out, "add");
  return tape_of(a).record(std::move(out), {a, b},
                           [ia, ib](Tape& t, const Tensor& g) {
                             for (std::size_t id : {ia, ib}) {
                               if (!t.requires_grad(id)) continue;
                               auto& gx = t.grad_buffer(id);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 gx[i] += g[i];
                               }
                             }
                           });
}

auto sub(const Var& a, const Var& b) -> Var {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  ensure_finite(out, "sub");
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape_of(a).record(std::move(out), {a, b},
                           [ia, ib](Tape& t, const Tensor& g) {
                             if (t.requires_grad(ia)) {
                               auto& ga = t.grad_buffer(ia);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 ga[i] += g[i];
                               }
                             }
                             if (t.requires_grad(ib)) {
                               auto& gb = t.grad_buffer(ib);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 gb[i] -= g[i];
                               }
                             }
                           });
}

auto mul(const Var& a, const Var& b) -> Var {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  ensure_finite(out, "mul");
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape_of(a).record(
      std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) {
          auto& ga = t.grad_buffer(ia);
          const auto& bv = t.value(ib);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          const auto& av = t.value(ia);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
      });
}

auto scale(const Var& a, double factor) -> Var {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

auto add_scalar(const Var& a, double offset) -> Var {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

auto concat(const std::vector<Var>& parts, std::size_t axis) -> Var {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  const auto& first = parts.front().value();
  const std::size_t rank = first.rank();
  if (rank == 0 || axis > 1 || (rank == 1 && axis != 0)) {
    throw std::invalid_argument("concat: unsupported axis/rank");
  }
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.value().rank() != rank) {
      throw std::invalid_argument("concat: rank mismatch");
    }
    ids.push_back(p.id());
  }
  Tensor out;
  std::vector<std::size_t> extents;  // rows (axis 0) or cols (axis 1) per part
  if (rank == 1) {
    std::vector<double> data;
    for (const auto& p : parts) {
      data.insert(data.end(), p.value().values().begin(),
                  p.value().values().end());
      extents.push_back(p.value().size());
    }
    out = Tensor::vector(std::move(data));
  } else if (axis == 0) {
    const std::size_t cols = first.cols();
    std::vector<double> data;
    std::size_t rows = 0;
    for (const auto& p : parts) {
      if (p.value().cols() != cols) {
        throw std::invalid_argument("concat axis 0: column counts differ");
      }
      data.insert(data.end(), p.value().values().begin(),
                  p.value().values().end());
      rows += p.value().rows();
      extents.push_back(p.value().rows() * cols);
    }
    out = Tensor({rows, cols}, std::move(data));
  } else {
    const std::size_t rows = first.rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
      if (p.value().rows() != rows) {
        throw std::invalid_argument(
            "concat axis 1: row counts differ " + shape_to_string(first.shape()) +
            " vs " + shape_to_string(p.shape()));
      }
      extents.push_back(p.value().cols());
      cols += p.value().cols();
    }
    out = Tensor({rows, cols}, 0.0);
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const auto& v = p.value();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy(v.row(r).begin(), v.row(r).end(),
                  out.data().begin() +
                      static_cast<std::ptrdiff_t>(r * cols + offset));
      }
      offset += v.cols();
    }
  }
  // Axis-0 and vector concatenation lay parts out contiguously.
  const bool contiguous = rank == 1 || axis == 0;
  return tape_of(parts.front())
      .record(std::move(out), parts,
              [ids, extents, contiguous](Tape& t, const Tensor& g) {
                if (contiguous) {
                  std::size_t offset = 0;
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    if (t.requires_grad(ids[k])) {
                      auto& gx = t.grad_buffer(ids[k]);
                      for (std::size_t i = 0; i < extents[k]; ++i) {
                        gx[i] += g[offset + i];
                      }
                    }
                    offset += extents[k];
                  }
                  return;
                }
                const std::size_t rows = g.rows();
                const std::size_t cols = g.cols();
                std::size_t offset = 0;
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  const std::size_t w = extents[k];
                  if (t.requires_grad(ids[k])) {
                    auto& gx = t.grad_buffer(ids[k]);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < w; ++c) {
                        gx[r * w + c] += g[r * cols + offset + c];
                      }
                    }
                  }
                  offset += w;
                }
              });
}

auto slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end)
    -> Var {
  const auto& v = a.value();
  if (v.rank() == 0 || axis > 1 || (v.rank() == 1 && axis != 0)) {
    throw std::invalid_argument("slice: unsupported axis/rank");
  }
  const std::size_t rows = v.rows();
  const std::size_t cols = v.cols();
  const std::size_t extent = (v.rank() == 1 || axis == 1) ? cols : rows;
  if (begin > end || end > extent) {
    throw std::invalid_argument("slice: range [" + std::to_string(begin) +
                                ", " + std::to_string(end) +
                                ") out of bounds for " +
                                shape_to_string(v.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out;
  if (v.rank() == 1) {
    out = Tensor::vector(std::vector<double>(
        v.values().begin() + static_cast<std::ptrdiff_t>(begin),
        v.values().begin() + static_cast<std::ptrdiff_t>(end)));
  } else if (axis == 0) {
    out = Tensor({w, cols},
                 std::vector<double>(
                     v.values().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                     v.values().begin() + static_cast<std::ptrdiff_t>(end * cols)));
  } else {
    out = Tensor({rows, w}, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) out.at(r, c) = v.at(r, begin + c);
    }
  }
  const std::size_t ia = a.id();
  const bool by_column = v.rank() == 2 && axis == 1;
  return tape_of(a).record(
      std::move(out), {a},
      [ia, by_column, begin, w, rows, cols](Tape& t, const Tensor& g) {
        auto& ga = t.grad_buffer(ia);
        if (!by_column) {
          const std::size_t start = ga.rank() == 1 ? begin : begin * cols;
          for (std::size_t i = 0; i < g.size(); ++i) ga[start + i] += g[i];
          return;
        }
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < w; ++c) {
            ga[r * cols + begin + c] += g[r * w + c];
          }
        }
      });
}

auto reshape(const Var& a, Shape shape) -> Var {
  if (shape_size(shape) != a.value().size()) {
    throw std::invalid_argument("reshape: " + shape_to_string(a.shape()) +
                                " -> " + shape_to_string(shape));
  }
  Tensor out(std::move(shape), a.value().values());
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(out), {a},
                           [ia](Tape& t, const Tensor& g) {
                             auto& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               ga[i] += g[i];
                             }
                           });
}

auto sigmoid(const Var& a) -> Var {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

auto tanh(const Var& a) -> Var {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

auto relu(const Var& a) -> Var {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

auto cos(const Var& a) -> Var {
  return unary(
      a, "cos", [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

auto log(const Var& a) -> Var {
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

auto log_sigmoid(const Var& a) -> Var {
  return unary(
      a, "log_sigmoid",
      [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        // d/dx log sigmoid(x) = sigmoid(-x)
        if (x >= 0) {
          const double e = std::exp(-x);
          return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(x));
      });
}

auto softmax(const Var& a, std::size_t axis) -> Var {
  const auto& v = a.value();
  if (v.rank() == 0 || axis > 1 || (v.rank() == 1 && axis != 0)) {
    throw std::invalid_argument("softmax: unsupported axis/rank");
  }
  Tensor out(v.shape(), 0.0);
  for_each_lane(v, axis, [&](std::size_t off, std::size_t stride, std::size_t len) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, v[off + j * stride]);
    double total = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double e = std::exp(v[off + j * stride] - mx);
      out[off + j * stride] = e;
      total += e;
    }
    for (std::size_t j = 0; j < len; ++j) out[off + j * stride] /= total;
  });
  ensure_finite(out, "softmax");
  const std::size_t ia = a.id();
  const std::size_t self = tape_of(a).size();
  return tape_of(a).record(
      std::move(out), {a}, [ia, self, axis](Tape& t, const Tensor& g) {
        const auto& y = t.value(self);
        auto& ga = t.grad_buffer(ia);
        for_each_lane(y, axis, [&](std::size_t off, std::size_t stride,
                                   std::size_t len) {
          double inner = 0.0;
          for (std::size_t j = 0; j < len; ++j) {
            inner += g[off + j * stride] * y[off + j * stride];
          }
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = off + j * stride;
            ga[idx] += y[idx] * (g[idx] - inner);
          }
        });
      });
}

auto masked_softmax(const Var& a, std::span<const std::uint8_t> mask) -> Var {
  require_rank(a, 2, "masked_softmax");
  const auto& v = a.value();
  if (mask.size() != v.size()) {
    throw std::invalid_argument("masked_softmax: mask length " +
                                std::to_string(mask.size()) +
                                " does not match " + shape_to_string(v.shape()));
  }
  const std::size_t rows = v.rows();
  const std::size_t cols = v.cols();
  Tensor out(v.shape(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask[r * cols + c]) mx = std::max(mx, v.at(r, c));
    }
    if (mx == -INFINITY) continue;
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!mask[r * cols + c]) continue;
      const double e = std::exp(v.at(r, c) - mx);
      out.at(r, c) = e;
      total += e;
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= total;
  }
  ensure_finite(out, "masked_softmax");
  const std::size_t ia = a.id();
  const std::size_t self = tape_of(a).size();
  return tape_of(a).record(
      std::move(out), {a}, [ia, self, rows, cols](Tape& t, const Tensor& g) {
        // Masked entries have y = 0, so the softmax Jacobian zeroes them.
        const auto& y = t.value(self);
        auto& ga = t.grad_buffer(ia);
        for (std::size_t r = 0; r < rows; ++r) {
          double inner = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            inner += g[r * cols + c] * y[r * cols + c];
          }
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t idx = r * cols + c;
            ga[idx] += y[idx] * (g[idx] - inner);
          }
        }
      });
}

auto sum(const Var& a) -> Var {
  double total = 0.0;
  for (double x : a.value().values()) total += x;
  Tensor out = Tensor::scalar(total);
  ensure_finite(out, "sum");
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(out), {a},
                           [ia](Tape& t, const Tensor& g) {
                             auto& ga = t.grad_buffer(ia);
                             const double gv = g[0];
                             for (std::size_t i = 0; i < ga.size(); ++i) {
                               ga[i] += gv;
                             }
                           });
}

auto sum(const Var& a, std::size_t axis) -> Var {
  const auto& v = a.value();
  if (v.rank() == 0 || axis > 1 || (v.rank() == 1 && axis != 0)) {
    throw std::invalid_argument("sum: unsupported axis/rank");
  }
  if (v.rank() == 1) return sum(a);
  const std::size_t rows = v.rows();
  const std::size_t cols = v.cols();
  Tensor out(reduce_shape(v, axis), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[axis == 0 ? c : r] += v.at(r, c);
    }
  }
  ensure_finite(out, "sum");
  const std::size_t ia = a.id();
  return tape_of(a).record(
      std::move(out), {a}, [ia, axis, rows, cols](Tape& t, const Tensor& g) {
        auto& ga = t.grad_buffer(ia);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            ga[r * cols + c] += g[axis == 0 ? c : r];
          }
        }
      });
}

auto mean(const Var& a) -> Var {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

auto mean(const Var& a, std::size_t axis) -> Var {
  const auto& v = a.value();
  const std::size_t n = (v.rank() == 1) ? v.size() : (axis == 0 ? v.rows() : v.cols());
  if (n == 0) throw std::invalid_argument("mean over empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

auto dot(const Var& a, const Var& b) -> Var {
  require_rank(a, 1, "dot");
  require_same_shape(a, b, "dot");
  const auto& av = a.value();
  const auto& bv = b.value();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i] * bv[i];
  Tensor out = Tensor::scalar(total);
  ensure_finite(out, "dot");
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape_of(a).record(
      std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        const double gv = g[0];
        if (t.requires_grad(ia)) {
          auto& ga = t.grad_buffer(ia);
          const auto& bv = t.value(ib);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gv * bv[i];
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          const auto& av = t.value(ia);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gv * av[i];
        }
      });
}

auto cosine(const Var& a, const Var& b) -> Var {
  require_rank(a, 1, "cosine");
  require_same_shape(a, b, "cosine");
  const auto& av = a.value();
  const auto& bv = b.value();
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  const double na = std::sqrt(aa);
  const double nb = std::sqrt(bb);
  Tensor out = Tensor::scalar(ab / (na * nb));
  ensure_finite(out, "cosine");
  const double cs = out[0];
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape_of(a).record(
      std::move(out), {a, b},
      [ia, ib, na, nb, cs](Tape& t, const Tensor& g) {
        const double gv = g[0];
        const auto& av = t.value(ia);
        const auto& bv = t.value(ib);
        if (t.requires_grad(ia)) {
          auto& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += gv * (bv[i] / (na * nb) - cs * av[i] / (na * na));
          }
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < gb.size(); ++i) {
            gb[i] += gv * (av[i] / (na * nb) - cs * bv[i] / (nb * nb));
          }
        }
      });
}

auto gather_rows(const Var& a, std::span<const std::size_t> indices) -> Var {
  require_rank(a, 2, "gather_rows");
  const auto& v = a.value();
  const std::size_t cols = v.cols();
  Tensor out({indices.size(), cols}, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= v.rows()) {
      throw std::invalid_argument("gather_rows: index " +
                                  std::to_string(indices[i]) +
                                  " out of range for " +
                                  shape_to_string(v.shape()));
    }
    const auto src = v.row(indices[i]);
    std::copy(src.begin(), src.end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return tape_of(a).record(
      std::move(out), {a}, [ia, idx = std::move(idx), cols](Tape& t, const Tensor& g) {
        auto& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          double* dst = ga.data().data() + idx[i] * cols;
          const double* src = g.data().data() + i * cols;
          for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
        }
      });
}

auto overwrite_rows(const Var& base, std::span<const std::size_t> rows,
                    const Var& values) -> Var {
  require_rank(base, 2, "overwrite_rows");
  require_rank(values, 2, "overwrite_rows");
  const auto& bv = base.value();
  const auto& vv = values.value();
  const std::size_t cols = bv.cols();
  if (vv.cols() != cols || vv.rows() != rows.size()) {
    throw std::invalid_argument("overwrite_rows: values shape " +
                                shape_to_string(vv.shape()) + " for " +
                                std::to_string(rows.size()) + " rows of " +
                                shape_to_string(bv.shape()));
  }
  std::vector<std::uint8_t> touched(bv.rows(), 0);
  Tensor out = bv;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= bv.rows() || touched[rows[i]]) {
      throw std::invalid_argument("overwrite_rows: rows must be distinct and in range");
    }
    touched[rows[i]] = 1;
    std::copy(vv.row(i).begin(), vv.row(i).end(), out.row(rows[i]).begin());
  }
  const std::size_t ib = base.id();
  const std::size_t iv = values.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape_of(base).record(
      std::move(out), {base, values},
      [ib, iv, idx = std::move(idx), touched = std::move(touched), cols](
          Tape& t, const Tensor& g) {
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          for (std::size_t r = 0; r < touched.size(); ++r) {
            if (touched[r]) continue;
            for (std::size_t c = 0; c < cols; ++c) {
              gb[r * cols + c] += g[r * cols + c];
            }
          }
        }
        if (t.requires_grad(iv)) {
          auto& gv = t.grad_buffer(iv);
          for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t c = 0; c < cols; ++c) {
              gv[i * cols + c] += g[idx[i] * cols + c];
            }
          }
        }
      });
}

auto batched_row_dot(const Var& queries, const Var& keys, std::size_t group)
    -> Var {
  require_rank(queries, 2, "batched_row_dot");
  require_rank(keys, 2, "batched_row_dot");
  const auto& q = queries.value();
  const auto& k = keys.value();
  const std::size_t n = q.rows();
  const std::size_t d = q.cols();
  if (group == 0 || k.rows() != n * group || k.cols() != d) {
    throw std::invalid_argument("batched_row_dot: keys " +
                                shape_to_string(k.shape()) + " vs queries " +
                                shape_to_string(q.shape()) + " with group " +
                                std::to_string(group));
  }
  Tensor out({n, group}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* qi = q.data().data() + i * d;
    for (std::size_t j = 0; j < group; ++j) {
      const double* kj = k.data().data() + (i * group + j) * d;
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
      out.at(i, j) = s;
    }
  }
  ensure_finite(out, "batched_row_dot");
  const std::size_t iq = queries.id();
  const std::size_t ik = keys.id();
  return tape_of(queries).record(
      std::move(out), {queries, keys},
      [iq, ik, n, d, group](Tape& t, const Tensor& g) {
        const auto& qv = t.value(iq);
        const auto& kv = t.value(ik);
        if (t.requires_grad(iq)) {
          auto& gq = t.grad_buffer(iq);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < group; ++j) {
              const double w = g[i * group + j];
              const double* kj = kv.data().data() + (i * group + j) * d;
              for (std::size_t c = 0; c < d; ++c) gq[i * d + c] += w * kj[c];
            }
          }
        }
        if (t.requires_grad(ik)) {
          auto& gk = t.grad_buffer(ik);
          for (std::size_t i = 0; i < n; ++i) {
            const double* qi = qv.data().data() + i * d;
            for (std::size_t j = 0; j < group; ++j) {
              const double w = g[i * group + j];
              double* dst = gk.data().data() + (i * group + j) * d;
              for (std::size_t c = 0; c < d; ++c) dst[c] += w * qi[c];
            }
          }
        }
      });
}

auto batched_weighted_sum(const Var& weights, const Var& values,
                          std::size_t group) -> Var {
  require_rank(weights, 2, "batched_weighted_sum");
  require_rank(values, 2, "batched_weighted_sum");
  const auto& w = weights.value();
  const auto& v = values.value();
  const std::size_t n = w.rows();
  const std::size_t d = v.cols();
  if (group == 0 || w.cols() != group || v.rows() != n * group) {
    throw std::invalid_argument("batched_weighted_sum: weights " +
                                shape_to_string(w.shape()) + " vs values " +
                                shape_to_string(v.shape()));
  }
  Tensor out({n, d}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* oi = out.data().data() + i * d;
    for (std::size_t j = 0; j < group; ++j) {
      const double wij = w.at(i, j);
      const double* vj = v.data().data() + (i * group + j) * d;
      for (std::size_t c = 0; c < d; ++c) oi[c] += wij * vj[c];
    }
  }
  ensure_finite(out, "batched_weighted_sum");
  const std::size_t iw = weights.id();
  const std::size_t iv = values.id();
  return tape_of(weights).record(
      std::move(out), {weights, values},
      [iw, iv, n, d, group](Tape& t, const Tensor& g) {
        const auto& wv = t.value(iw);
        const auto& vv = t.value(iv);
        if (t.requires_grad(iw)) {
          auto& gw = t.grad_buffer(iw);
          for (std::size_t i = 0; i < n; ++i) {
            const double* gi = g.data().data() + i * d;
            for (std::size_t j = 0; j < group; ++j) {
              const double* vj = vv.data().data() + (i * group + j) * d;
              double s = 0.0;
              for (std::size_t c = 0; c < d; ++c) s += gi[c] * vj[c];
              gw[i * group + j] += s;
            }
          }
        }
        if (t.requires_grad(iv)) {
          auto& gv = t.grad_buffer(iv);
          for (std::size_t i = 0; i < n; ++i) {
            const double* gi = g.data().data() + i * d;
            for (std::size_t j = 0; j < group; ++j) {
              const double wij = wv[i * group + j];
              double* dst = gv.data().data() + (i * group + j) * d;
              for (std::size_t c = 0; c < d; ++c) dst[c] += wij * gi[c];
            }
          }
        }
      });
}

}  // namespace tgrec::ad

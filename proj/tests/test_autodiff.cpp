#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "tgrec/autodiff/adam.hpp"
#include "tgrec/autodiff/checkpoint.hpp"
#include "tgrec/autodiff/gradcheck.hpp"
#include "tgrec/autodiff/ops.hpp"
#include "tgrec/autodiff/params.hpp"
#include "tgrec/autodiff/tape.hpp"
#include "tgrec/errors.hpp"

using namespace tgrec;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

auto random_tensor(ad::Shape shape, ad::Rng& rng, double lo = -1.0, double hi = 1.0) -> Tensor {
  Tensor t(shape);
  for (auto& x : t.data()) x = lo + (hi - lo) * ad::uniform01(rng);
  return t;
}

// Values bounded away from zero, for ops with a kink there.
auto away_from_zero(ad::Shape shape, ad::Rng& rng) -> Tensor {
  Tensor t = random_tensor(shape, rng);
  for (auto& x : t.data()) x = x < 0 ? x - 0.1 : x + 0.1;
  return t;
}

// Carves a tensor of `shape` out of the flat input starting at `offset`.
auto part(const Var& x, std::size_t offset, const ad::Shape& shape) -> Var {
  return ad::reshape(ad::slice(x, 0, offset, offset + ad::shape_size(shape)), shape);
}

auto flat(const std::vector<Tensor>& parts) -> Tensor {
  std::vector<double> v;
  for (const auto& p : parts) v.insert(v.end(), p.values().begin(), p.values().end());
  return Tensor::vector(std::move(v));
}

// Reduces an op output to a scalar with fixed random weights so every output
// coordinate contributes a distinct amount to the gradient.
auto project(Tape& tape, const Var& y, std::uint64_t seed) -> Var {
  ad::Rng rng(seed);
  return ad::sum(ad::mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

constexpr int kTrials = 100;
constexpr double kTol = 1e-6;

void check_op(const std::string& name,
              const std::function<Var(Tape&, const Var&, std::size_t, std::size_t)>& op,
              const std::function<Tensor(ad::Rng&, std::size_t, std::size_t)>& input) {
  ad::Rng rng(std::hash<std::string>{}(name));
  double worst = 0.0;
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t m = 1 + ad::uniform_index(rng, 4);
    const std::size_t n = 1 + ad::uniform_index(rng, 4);
    const Tensor x = input(rng, m, n);
    const auto seed = static_cast<std::uint64_t>(trial);
    const double err = ad::finite_diff_check(
        [&](Tape& tape, const Var& v) { return project(tape, op(tape, v, m, n), seed); }, x);
    worst = std::max(worst, err);
  }
  EXPECT_LT(worst, kTol) << name;
}

}  // namespace

TEST(Tensor, ShapesAndAccess) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(m.row(1)[0], 4.0);
  EXPECT_EQ(Tensor::vector({1, 2}).rows(), 1u);
  EXPECT_EQ(Tensor::scalar(3.5).item(), 3.5);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Ops, ForwardValues) {
  Tape tape;
  const Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const Var b = tape.constant(Tensor::matrix({{5, 6}, {7, 8}}));
  EXPECT_EQ(ad::matmul(a, b).value(), Tensor::matrix({{19, 22}, {43, 50}}));
  EXPECT_EQ(ad::add(a, tape.constant(Tensor::vector({10, 20}))).value(),
            Tensor::matrix({{11, 22}, {13, 24}}));
  EXPECT_EQ(ad::concat({a, b}, 1).value(), Tensor::matrix({{1, 2, 5, 6}, {3, 4, 7, 8}}));
  EXPECT_EQ(ad::slice(a, 0, 1, 2).value(), Tensor::matrix({{3, 4}}));
  EXPECT_DOUBLE_EQ(ad::log_sigmoid(tape.constant(Tensor::scalar(0.0))).value().item(),
                   -std::log(2.0));
  // Stable for large negative inputs.
  EXPECT_DOUBLE_EQ(ad::log_sigmoid(tape.constant(Tensor::scalar(-800.0))).value().item(),
                   -800.0);
}

TEST(Ops, MaskedSoftmaxZeroesPadding) {
  Tape tape;
  const Var x = tape.constant(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}));
  const std::vector<std::uint8_t> mask = {0, 1, 1, 0, 0, 0};
  const Tensor y = ad::masked_softmax(x, mask).value();
  EXPECT_EQ(y.at(0, 0), 0.0);
  EXPECT_NEAR(y.at(0, 1) + y.at(0, 2), 1.0, 1e-15);
  EXPECT_NEAR(y.at(0, 2) / y.at(0, 1), std::exp(1.0), 1e-12);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.at(1, c), 0.0);
}

TEST(Ops, ShapeErrorsAndNonFinite) {
  Tape tape;
  const Var a = tape.constant(Tensor::matrix({{1, 2}}));
  EXPECT_THROW(ad::matmul(a, a), std::invalid_argument);
  EXPECT_THROW(ad::add(a, tape.constant(Tensor::vector({1, 2, 3}))), std::invalid_argument);
  EXPECT_THROW(ad::log(tape.constant(Tensor::scalar(-1.0))), NumericError);
  EXPECT_THROW(ad::scale(tape.constant(Tensor::scalar(1e300)), 1e300), NumericError);
}

TEST(Ops, MatmulKernelMatchesNaive) {
  ad::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + ad::uniform_index(rng, 9);
    const std::size_t k = 1 + ad::uniform_index(rng, 9);
    const std::size_t n = 1 + ad::uniform_index(rng, 9);
    const Tensor a = random_tensor({m, k}, rng);
    const Tensor b = random_tensor({k, n}, rng);
    std::vector<double> out(m * n);
    ad::matmul_kernel(a.data(), b.data(), out, m, k, n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
        EXPECT_NEAR(out[i * n + j], acc, 1e-12);
      }
    }
  }
}

TEST(Ops, MatmulRowsIndependentOfBatch) {
  ad::Rng rng(4);
  const Tensor a = random_tensor({7, 13}, rng);
  const Tensor b = random_tensor({13, 5}, rng);
  std::vector<double> all(7 * 5);
  ad::matmul_kernel(a.data(), b.data(), all, 7, 13, 5);
  for (std::size_t i = 0; i < 7; ++i) {
    std::vector<double> one(5);
    ad::matmul_kernel(a.row(i), b.data(), one, 1, 13, 5);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(one[j], all[i * 5 + j]);
  }
}

// Property: analytic gradients of every op agree with central differences.
TEST(OpsGradient, Unary) {
  auto dense = [](ad::Rng& r, std::size_t m, std::size_t n) { return random_tensor({m * n}, r); };
  auto as_matrix = [](const Var& x, std::size_t m, std::size_t n) { return part(x, 0, {m, n}); };
  check_op("sigmoid", [&](Tape&, const Var& x, auto m, auto n) { return ad::sigmoid(as_matrix(x, m, n)); }, dense);
  check_op("tanh", [&](Tape&, const Var& x, auto m, auto n) { return ad::tanh(as_matrix(x, m, n)); }, dense);
  check_op("cos", [&](Tape&, const Var& x, auto m, auto n) { return ad::cos(as_matrix(x, m, n)); }, dense);
  check_op("log_sigmoid", [&](Tape&, const Var& x, auto m, auto n) { return ad::log_sigmoid(as_matrix(x, m, n)); }, dense);
  check_op("scale", [&](Tape&, const Var& x, auto m, auto n) { return ad::scale(as_matrix(x, m, n), -2.5); }, dense);
  check_op("add_scalar", [&](Tape&, const Var& x, auto m, auto n) { return ad::add_scalar(as_matrix(x, m, n), 0.7); }, dense);
  check_op("relu", [&](Tape&, const Var& x, auto m, auto n) { return ad::relu(as_matrix(x, m, n)); },
           [](ad::Rng& r, std::size_t m, std::size_t n) { return away_from_zero({m * n}, r); });
  check_op("log", [&](Tape&, const Var& x, auto m, auto n) { return ad::log(as_matrix(x, m, n)); },
           [](ad::Rng& r, std::size_t m, std::size_t n) { return random_tensor({m * n}, r, 0.2, 2.0); });
  check_op("softmax0", [&](Tape&, const Var& x, auto m, auto n) { return ad::softmax(as_matrix(x, m, n), 0); }, dense);
  check_op("softmax1", [&](Tape&, const Var& x, auto m, auto n) { return ad::softmax(as_matrix(x, m, n), 1); }, dense);
  check_op("sum", [&](Tape&, const Var& x, auto m, auto n) { return ad::sum(as_matrix(x, m, n)); }, dense);
  check_op("sum0", [&](Tape&, const Var& x, auto m, auto n) { return ad::sum(as_matrix(x, m, n), 0); }, dense);
  check_op("sum1", [&](Tape&, const Var& x, auto m, auto n) { return ad::sum(as_matrix(x, m, n), 1); }, dense);
  check_op("mean", [&](Tape&, const Var& x, auto m, auto n) { return ad::mean(as_matrix(x, m, n)); }, dense);
  check_op("mean1", [&](Tape&, const Var& x, auto m, auto n) { return ad::mean(as_matrix(x, m, n), 1); }, dense);
  check_op("slice", [&](Tape&, const Var& x, auto m, auto n) {
    return ad::slice(as_matrix(x, m, n), 1, n / 2, n); }, dense);
  check_op("reshape", [&](Tape&, const Var& x, auto m, auto n) {
    return ad::reshape(as_matrix(x, m, n), {n, m}); }, dense);
}

TEST(OpsGradient, Binary) {
  auto two = [](ad::Rng& r, std::size_t m, std::size_t n) {
    return flat({random_tensor({m, n}, r), random_tensor({m, n}, r)});
  };
  auto lhs = [](const Var& x, std::size_t m, std::size_t n) { return part(x, 0, {m, n}); };
  auto rhs = [](const Var& x, std::size_t m, std::size_t n) { return part(x, m * n, {m, n}); };
  check_op("add", [&](Tape&, const Var& x, auto m, auto n) { return ad::add(lhs(x, m, n), rhs(x, m, n)); }, two);
  check_op("sub", [&](Tape&, const Var& x, auto m, auto n) { return ad::sub(lhs(x, m, n), rhs(x, m, n)); }, two);
  check_op("mul", [&](Tape&, const Var& x, auto m, auto n) { return ad::mul(lhs(x, m, n), rhs(x, m, n)); }, two);
  check_op("concat0", [&](Tape&, const Var& x, auto m, auto n) { return ad::concat({lhs(x, m, n), rhs(x, m, n)}, 0); }, two);
  check_op("concat1", [&](Tape&, const Var& x, auto m, auto n) { return ad::concat({lhs(x, m, n), rhs(x, m, n)}, 1); }, two);
  check_op("dot", [&](Tape&, const Var& x, auto m, auto n) {
    return ad::dot(ad::reshape(lhs(x, m, n), {m * n}), ad::reshape(rhs(x, m, n), {m * n})); }, two);
  check_op("cosine", [&](Tape&, const Var& x, auto m, auto n) {
    return ad::cosine(ad::reshape(lhs(x, m, n), {m * n}), ad::reshape(rhs(x, m, n), {m * n})); }, two);
  check_op("bias_add", [&](Tape&, const Var& x, auto m, auto n) {
    return ad::add(lhs(x, m, n), part(x, m * n, {n})); },
    [](ad::Rng& r, std::size_t m, std::size_t n) { return random_tensor({m * n + n}, r); });
  check_op("matmul", [&](Tape&, const Var& x, auto m, auto n) {
    return ad::matmul(part(x, 0, {m, n}), part(x, m * n, {n, m + 1})); },
    [](ad::Rng& r, std::size_t m, std::size_t n) { return random_tensor({m * n + n * (m + 1)}, r); });
}

TEST(OpsGradient, IndexingAndGrouped) {
  check_op("gather_rows", [](Tape&, const Var& x, auto m, auto n) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 2 * m + 1; ++i) idx.push_back((i * 7 + 1) % m);
    return ad::gather_rows(part(x, 0, {m, n}), idx); },
    [](ad::Rng& r, std::size_t m, std::size_t n) { return random_tensor({m * n}, r); });
  check_op("overwrite_rows", [](Tape&, const Var& x, auto m, auto n) {
    const std::size_t rows = m + 2;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < m; ++i) idx.push_back((i * 3 + 1) % rows);
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return ad::overwrite_rows(part(x, 0, {rows, n}), idx, part(x, rows * n, {idx.size(), n})); },
    [](ad::Rng& r, std::size_t m, std::size_t n) { return random_tensor({(m + 2) * n + m * n}, r); });
  check_op("batched_row_dot", [](Tape&, const Var& x, auto m, auto n) {
    const std::size_t g = 3;
    return ad::batched_row_dot(part(x, 0, {m, n}), part(x, m * n, {m * g, n}), g); },
    [](ad::Rng& r, std::size_t m, std::size_t n) { return random_tensor({m * n * 4}, r); });
  check_op("batched_weighted_sum", [](Tape&, const Var& x, auto m, auto n) {
    const std::size_t g = 3;
    return ad::batched_weighted_sum(part(x, 0, {m, g}), part(x, m * g, {m * g, n}), g); },
    [](ad::Rng& r, std::size_t m, std::size_t n) { return random_tensor({m * 3 + m * 3 * n}, r); });
  check_op("masked_softmax", [](Tape&, const Var& x, auto m, auto n) {
    std::vector<std::uint8_t> mask(m * n);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i * 5 + m) % 3 != 0;
    return ad::masked_softmax(part(x, 0, {m, n}), mask); },
    [](ad::Rng& r, std::size_t m, std::size_t n) { return random_tensor({m * n}, r); });
}

TEST(Tape, BackwardIsRepeatable) {
  ad::ModelParams params;
  params.add("w", Tensor::matrix({{0.5, -1.0}, {2.0, 0.25}}));
  params.add("unused", Tensor::vector({1.0}));
  Tape tape;
  const Var x = tape.constant(Tensor::matrix({{1.0, 2.0}}));
  const Var loss = ad::sum(ad::tanh(ad::matmul(x, tape.param(params, "w"))));
  tape.backward(loss);
  const auto g1 = tape.gradients(params);
  tape.backward(loss);
  const auto g2 = tape.gradients(params);
  EXPECT_EQ(g1, g2);
  EXPECT_EQ(g1.at("unused"), Tensor::vector({0.0}));
  const double d = 1.0 - std::pow(std::tanh(0.5 + 4.0), 2);
  EXPECT_NEAR(g1.at("w").at(1, 0), 2.0 * d, 1e-15);
}

TEST(Tape, NoGradTapeRecordsValuesOnly) {
  ad::ModelParams params;
  params.add("w", Tensor::vector({2.0}));
  Tape tape(false);
  const Var y = ad::scale(tape.param(params, "w"), 3.0);
  EXPECT_EQ(y.value().item(), 6.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Adam, MatchesHandComputedSteps) {
  ad::ModelParams params;
  params.add("p", Tensor::vector({1.0, -2.0}));
  ad::AdamConfig cfg;
  cfg.lr = 0.1;
  ad::Adam adam(cfg);
  std::vector<double> p = {1.0, -2.0}, m = {0, 0}, v = {0, 0};
  const std::vector<std::vector<double>> grads = {{0.5, -3.0}, {-1.0, 0.25}, {2.0, 2.0}};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    adam.step(params, {{"p", Tensor::vector(grads[t - 1])}});
    for (std::size_t i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      p[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(params.get("p")[i], p[i], 1e-14);
    }
  }
  EXPECT_EQ(adam.step_count(), 3);
  EXPECT_THROW(adam.step(params, {{"p", Tensor::vector({1.0})}}), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ad::Rng rng(11);
  ad::ModelParams params;
  params.add("a", ad::glorot_uniform(3, 4, rng));
  params.add("b", Tensor::vector({1.0 / 3.0, -0.0, 1e-300}));
  ad::Checkpoint ckpt;
  ckpt.metadata["d_mem"] = "31";
  ad::put_params(ckpt, params);
  std::stringstream buf;
  ad::write_checkpoint(buf, ckpt);
  const auto back = ad::read_checkpoint(buf);
  EXPECT_EQ(back, ckpt);
  EXPECT_EQ(ad::take_params(back), params);
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream buf("not a checkpoint");
  EXPECT_THROW(ad::read_checkpoint(buf), DataError);
  std::stringstream truncated;
  ad::Checkpoint ckpt;
  ckpt.tensors["x"] = Tensor::vector({1, 2, 3});
  ad::write_checkpoint(truncated, ckpt);
  std::string bytes = truncated.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(ad::read_checkpoint(cut), DataError);
}

TEST(Params, GlorotBoundsAndRegistry) {
  ad::Rng rng(1);
  const Tensor w = ad::glorot_uniform(20, 30, rng);
  const double bound = std::sqrt(6.0 / 50.0);
  for (double x : w.values()) EXPECT_LE(std::abs(x), bound);
  ad::ModelParams params;
  params.add("w", w);
  EXPECT_THROW(params.add("w", w), std::invalid_argument);
  EXPECT_THROW(params.set("w", Tensor::vector({1.0})), std::invalid_argument);
  EXPECT_EQ(params.num_scalars(), 600u);
}

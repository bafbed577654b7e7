#include "tgrec/embedding/time_encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "tgrec/autodiff/ops.hpp"

namespace tgrec::embed::time_encoder {

void add_params(ad::ModelParams& params, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("time encoding dimension must be > 0");
  std::vector<double> omega(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const double frac = dim == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(dim - 1);
    omega[k] = std::pow(10.0, -9.0 * frac);
  }
  params.add(kOmega, ad::Tensor::matrix(1, dim, std::move(omega)));
  params.add(kPhase, ad::Tensor({dim}, 0.0));
}

auto encode(ad::Tape& tape, const ad::ModelParams& params,
            std::span<const double> deltas) -> ad::Var {
  for (double d : deltas) {
    if (!(d >= 0.0)) throw std::invalid_argument("negative time delta");
  }
  auto column = tape.constant(ad::Tensor({deltas.size(), 1},
                                         std::vector<double>(deltas.begin(), deltas.end())));
  auto omega = tape.param(params, kOmega);
  auto phase = tape.param(params, kPhase);
  return ad::cos(ad::add(ad::matmul(column, omega), phase));
}

auto encode_value(const ad::ModelParams& params, double delta)
    -> std::vector<double> {
  if (!(delta >= 0.0)) throw std::invalid_argument("negative time delta");
  const auto& omega = params.get(kOmega);
  const auto& phase = params.get(kPhase);
  std::vector<double> out(omega.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = std::cos(omega[k] * delta + phase[k]);
  }
  return out;
}

}  // namespace tgrec::embed::time_encoder

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tgrec/autodiff/params.hpp"
#include "tgrec/autodiff/tape.hpp"

namespace tgrec::embed {

// Trainable cosine features phi(dt) = cos(omega * dt + phase), elementwise.
// Parameters: "time.omega" [1 x dim], "time.phase" [dim].
namespace time_encoder {

inline constexpr const char* kOmega = "time.omega";
inline constexpr const char* kPhase = "time.phase";

// omega_k = 10^(-9k/(dim-1)) spans second- to decade-scale periods; phase 0.
void add_params(ad::ModelParams& params, std::size_t dim);

// One row per delta. Throws std::invalid_argument on a negative delta.
auto encode(ad::Tape& tape, const ad::ModelParams& params,
            std::span<const double> deltas) -> ad::Var;

// Direct evaluation without a tape.
auto encode_value(const ad::ModelParams& params, double delta)
    -> std::vector<double>;

}  // namespace time_encoder
}  // namespace tgrec::embed

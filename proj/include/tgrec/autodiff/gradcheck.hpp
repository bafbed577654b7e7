#pragma once

#include <functional>
#include <map>
#include <string>

#include "tgrec/autodiff/params.hpp"
#include "tgrec/autodiff/tape.hpp"

namespace tgrec::ad {

using ScalarFn = std::function<Var(Tape&, const Var&)>;
using ParamsFn = std::function<Var(Tape&, const ModelParams&)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
auto finite_diff_check(const ScalarFn& f, const Tensor& x, double h = 1e-5)
    -> double;

struct ParamCheckResult {
  std::map<std::string, double> max_error;  // per parameter
  double worst = 0.0;
  std::string worst_name;
  bool any_nonzero_grad = false;
};

// Same metric over every coordinate of every parameter of a scalar function
// of the whole parameter set.
auto finite_diff_check_params(const ParamsFn& f, const ModelParams& params,
                              double h = 1e-5) -> ParamCheckResult;

}  // namespace tgrec::ad

#include "tgrec/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tgrec/errors.hpp"

namespace tgrec::ad {

namespace {

auto relative_error(double analytic, double numeric) -> double {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

auto checked(double v) -> double {
  if (!std::isfinite(v)) {
    throw NumericError("non-finite value during finite-difference check");
  }
  return v;
}

}  // namespace

auto finite_diff_check(const ScalarFn& f, const Tensor& x, double h) -> double {
  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var y = f(tape, xv);
    tape.backward(y);
    analytic = tape.grad(xv);
  }
  auto eval = [&](const Tensor& at) {
    Tape tape(false);
    return checked(f(tape, tape.constant(at)).value().item());
  };
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = eval(probe);
    probe[i] = orig - h;
    const double down = eval(probe);
    probe[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * h)));
  }
  return worst;
}

auto finite_diff_check_params(const ParamsFn& f, const ModelParams& params,
                              double h) -> ParamCheckResult {
  Gradients analytic;
  {
    Tape tape;
    Var y = f(tape, params);
    tape.backward(y);
    analytic = tape.gradients(params);
  }
  auto eval = [&](const ModelParams& at) {
    Tape tape(false);
    return checked(f(tape, at).value().item());
  };
  ParamCheckResult result;
  ModelParams probe = params;
  for (const auto& [name, value] : params) {
    const auto& grad = analytic.at(name);
    double worst = 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) {
      auto p = probe.mutable_values(name);
      const double orig = p[i];
      p[i] = orig + h;
      const double up = eval(probe);
      p[i] = orig - h;
      const double down = eval(probe);
      p[i] = orig;
      worst = std::max(worst, relative_error(grad[i], (up - down) / (2 * h)));
      if (grad[i] != 0.0) result.any_nonzero_grad = true;
    }
    result.max_error[name] = worst;
    if (worst >= result.worst) {
      result.worst = worst;
      result.worst_name = name;
    }
  }
  return result;
}

}  // namespace tgrec::ad

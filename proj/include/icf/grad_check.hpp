#pragma once

#include <functional>
#include <span>

#include "icf/autodiff.hpp"

namespace icf::ad {

/// Scalar-valued function of one tensor, recorded on the given tape.
using ScalarFunction = std::function<Var(Tape&, Var)>;

/// Relative error used by the gradient checks:
/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Worst relative error between the backward pass and central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / 2 eps, over `coords` (all coordinates
/// when empty).
double grad_check(const ScalarFunction& f, const Tensor& point, double epsilon,
                  std::span<const std::size_t> coords = {});

}  // namespace icf::ad

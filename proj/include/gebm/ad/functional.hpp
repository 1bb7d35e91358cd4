#pragma once

#include <functional>

#include "gebm/ad/tape.hpp"

namespace gebm::ad {

/// Builds a scalar (1x1) root from an input node and bound parameters.
using TapeFunction = std::function<Var(Tape&, Var input, const BoundParams& params)>;

struct ValueAndGradient {
  double value = 0.0;
  Matrix input_grad;
  ParamVector param_grad;
};

/// Runs the forward pass only.
double forward(const TapeFunction& f, const Matrix& input, const ParamVector& params);

/// Forward then reverse sweep; exact derivatives w.r.t. input and parameters.
ValueAndGradient value_and_gradient(const TapeFunction& f, const Matrix& input,
                                    const ParamVector& params);

/// max_i |(f(x+h e_i) - f(x-h e_i))/2h - g_i| / (|g_i| + 1e-12)
double finite_diff_check(const std::function<double(const Vector&)>& f, const Vector& point,
                         const Vector& analytic_grad, double step);

/// Same check for a function that returns its own gradient.
double finite_diff_check(const std::function<std::pair<double, Vector>(const Vector&)>& f,
                         const Vector& point, double step);

/// Central-difference gradient of f at x.
Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                        double step);

}  // namespace gebm::ad

#include "gebm/ad/functional.hpp"

#include <algorithm>
#include <cmath>

#include "gebm/error.hpp"

namespace gebm::ad {

double forward(const TapeFunction& f, const Matrix& input, const ParamVector& params) {
  Tape tape;
  Var x = tape.constant(input);
  BoundParams p = tape.bind(params, false);
  return tape.scalar(f(tape, x, p));
}

ValueAndGradient value_and_gradient(const TapeFunction& f, const Matrix& input,
                                    const ParamVector& params) {
  Tape tape;
  Var x = tape.variable(input);
  BoundParams p = tape.bind(params, true);
  Var root = f(tape, x, p);
  tape.backward(root);
  return {tape.scalar(root), tape.gradient(x), tape.gradient(p)};
}

Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                        double step) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double finite_diff_check(const std::function<double(const Vector&)>& f, const Vector& point,
                         const Vector& analytic_grad, double step) {
  if (analytic_grad.size() != point.size())
    throw DimensionError("gradient length does not match point length");
  const Vector fd = numeric_gradient(f, point, step);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < point.size(); ++i)
    worst = std::max(worst, std::abs(fd[i] - analytic_grad[i]) / (std::abs(analytic_grad[i]) + 1e-12));
  return worst;
}

double finite_diff_check(const std::function<std::pair<double, Vector>(const Vector&)>& f,
                         const Vector& point, double step) {
  const Vector g = f(point).second;
  return finite_diff_check([&](const Vector& x) { return f(x).first; }, point, g, step);
}

}  // namespace gebm::ad

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace gebm::rkhs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// k(a, b) = exp(-|a - b|^2 / (2 sigma^2)) for every row pair.
Matrix gaussian_kernel(const Matrix& a, const Matrix& b, double bandwidth);

/// Median of the pairwise Euclidean distances between distinct rows.
double median_bandwidth(const Matrix& y);

/// Finite-sample KALE problem over the RKHS ball of a Gaussian kernel.
struct RkhsKaleProblem {
  Matrix X;
  Matrix Y;
  double bandwidth = 1.0;
  double lambda = 1.0;
  /// K_ij = k(Y_i, Y_j).
  Matrix K;
  /// m_i = (1/N) sum_n k(X_n, Y_i).
  Vector m;
  /// |mu_P|^2 = (1/N^2) sum_{n,n'} k(X_n, X_n').
  double mu_norm2 = 0.0;

  Eigen::Index M() const { return Y.rows(); }
};

/// Requires N, M >= 2, matching widths, bandwidth > 0 and lambda > 0.
RkhsKaleProblem build_problem(const Matrix& X, const Matrix& Y, double bandwidth, double lambda);

/// S~(beta) = softmax(m / lambda - K beta).
Vector normalized_weights(const RkhsKaleProblem& p, const Vector& beta);

/// L(beta) = -log(1^T S(beta)) - (lambda/2) beta^T K beta, S = exp(m/lambda - K beta).
double dual_objective(const RkhsKaleProblem& p, const Vector& beta);

/// Gradient of L: K (S~ - lambda beta).
Vector dual_gradient(const RkhsKaleProblem& p, const Vector& beta);

/// Energy h = alpha mu_P + sum_i beta_i k(Y_i, .) + c.
struct RkhsSolution {
  double alpha = 0.0;
  Vector beta;
  double c = 0.0;
  /// L(beta) at the returned beta.
  double objective = 0.0;
  int iterations = 0;
  /// |lambda beta - S~(beta)| per iteration, starting with the initial point.
  std::vector<double> residuals;
};

/// alpha = -1/lambda and c = log(1^T S(beta)) - ln M for a given beta.
RkhsSolution solution_at(const RkhsKaleProblem& p, const Vector& beta);

/// Damped Newton on L:
///   beta <- beta - gamma (lambda I + E K)^{-1} (lambda beta - S~),
///   E = diag(S~) - S~ S~^T,
/// halving gamma until L does not decrease. Stops when the residual is at
/// most `tol` or after `max_iters`. A near-singular system raises
/// DivergenceError carrying the iteration index.
RkhsSolution newton_solve(const RkhsKaleProblem& p, double damping = 1.0, int max_iters = 100,
                          double tol = 1e-10, const Vector* beta0 = nullptr);

/// One undamped-or-damped Newton step from `beta` (no line search).
Vector newton_step(const RkhsKaleProblem& p, const Vector& beta, double damping);

/// h evaluated at arbitrary rows.
Vector evaluate_energy(const RkhsKaleProblem& p, const RkhsSolution& s, const Matrix& at);

/// Unpenalized objective -mean_X h - mean_Y exp(-h) + 1 at the solution.
double rkhs_kale_value(const RkhsSolution& s, const RkhsKaleProblem& p);

using Sampler = std::function<Matrix(Eigen::Index n, std::uint64_t seed)>;

struct RateCell {
  Eigen::Index n;
  std::uint64_t seed;
  double lambda;
  double value;
  double kl_true;
  double abs_error;
};

struct RateResult {
  /// Least-squares slope of log(median error) against log N.
  double slope = 0.0;
  std::vector<Eigen::Index> n_grid;
  std::vector<double> median_errors;
  std::vector<RateCell> cells;
};

/// For each N: lambda = 1/sqrt(N), N data and N base rows per seed, error
/// |value - kl_true|, median over seeds. Bandwidth <= 0 selects the median
/// heuristic per problem. Needs at least 4 grid points (increasing) and 10
/// seeds.
RateResult rate_experiment(const Sampler& p_sampler, const Sampler& b_sampler,
                           const std::vector<Eigen::Index>& n_grid,
                           const std::vector<std::uint64_t>& seeds, double kl_true,
                           double bandwidth = 1.0);

/// N,seed,lambda,value,kl_true,abs_error
void write_rate_csv(const std::filesystem::path& path, const RateResult& r);

}  // namespace gebm::rkhs

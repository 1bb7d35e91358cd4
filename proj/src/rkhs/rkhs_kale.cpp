#include "gebm/rkhs/rkhs_kale.hpp"

#include <algorithm>
#include <cmath>

#include "gebm/error.hpp"
#include "gebm/io/csv.hpp"

namespace gebm::rkhs {

namespace {

double log_sum_exp(const Vector& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

Vector exponent(const RkhsKaleProblem& p, const Vector& beta) {
  return p.m / p.lambda - p.K * beta;
}

double residual(const RkhsKaleProblem& p, const Vector& beta) {
  return (p.lambda * beta - normalized_weights(p, beta)).norm();
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Matrix gaussian_kernel(const Matrix& a, const Matrix& b, double bandwidth) {
  if (a.cols() != b.cols()) throw DimensionError("kernel inputs have different widths");
  // Direct differences keep k(y, y) = 1 and K exactly symmetric.
  Matrix d2(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    d2.col(j) = (a.rowwise() - b.row(j)).rowwise().squaredNorm();
  return (-d2.array() / (2.0 * bandwidth * bandwidth)).exp().matrix();
}

double median_bandwidth(const Matrix& y) {
  if (y.rows() < 2) throw ConfigError("median heuristic needs at least two rows");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(y.rows() * (y.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = i + 1; j < y.rows(); ++j) d.push_back((y.row(i) - y.row(j)).norm());
  const double med = median_of(std::move(d));
  if (!(med > 0.0)) throw ConfigError("median pairwise distance is zero");
  return med;
}

RkhsKaleProblem build_problem(const Matrix& X, const Matrix& Y, double bandwidth, double lambda) {
  if (X.rows() < 2 || Y.rows() < 2) throw ConfigError("RKHS KALE needs N, M >= 2");
  if (X.cols() != Y.cols()) throw DimensionError("data and base rows have different widths");
  if (!(bandwidth > 0.0)) throw ConfigError("bandwidth must be > 0");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
  RkhsKaleProblem p;
  p.X = X;
  p.Y = Y;
  p.bandwidth = bandwidth;
  p.lambda = lambda;
  p.K = gaussian_kernel(Y, Y, bandwidth);
  p.m = gaussian_kernel(Y, X, bandwidth).rowwise().mean();
  p.mu_norm2 = gaussian_kernel(X, X, bandwidth).mean();
  return p;
}

Vector normalized_weights(const RkhsKaleProblem& p, const Vector& beta) {
  const Vector e = exponent(p, beta);
  Vector s = (e.array() - e.maxCoeff()).exp().matrix();
  return s / s.sum();
}

double dual_objective(const RkhsKaleProblem& p, const Vector& beta) {
  if (beta.size() != p.M()) throw DimensionError("beta length must equal M");
  return -log_sum_exp(exponent(p, beta)) - 0.5 * p.lambda * beta.dot(p.K * beta);
}

Vector dual_gradient(const RkhsKaleProblem& p, const Vector& beta) {
  return p.K * (normalized_weights(p, beta) - p.lambda * beta);
}

RkhsSolution solution_at(const RkhsKaleProblem& p, const Vector& beta) {
  RkhsSolution s;
  s.alpha = -1.0 / p.lambda;
  s.beta = beta;
  s.c = log_sum_exp(exponent(p, beta)) - std::log(static_cast<double>(p.M()));
  s.objective = dual_objective(p, beta);
  return s;
}

Vector newton_step(const RkhsKaleProblem& p, const Vector& beta, double damping) {
  const Eigen::Index M = p.M();
  const double jitter = 1e-10 * p.K.trace() / static_cast<double>(M);
  const Matrix Kj = p.K + jitter * Matrix::Identity(M, M);
  const Vector st = normalized_weights(p, beta);
  // (lambda I + E K) with E = diag(st) - st st^T.
  Matrix A = st.asDiagonal() * Kj;
  A.noalias() -= st * (Kj.transpose() * st).transpose();
  A.diagonal().array() += p.lambda;
  Eigen::PartialPivLU<Matrix> lu(A);
  if (!(lu.rcond() > 1e-14)) throw DivergenceError("Newton system is singular", -1);
  return beta - damping * lu.solve(p.lambda * beta - st);
}

RkhsSolution newton_solve(const RkhsKaleProblem& p, double damping, int max_iters, double tol,
                          const Vector* beta0) {
  if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("Newton damping must be in (0, 1]");
  if (!(tol > 0.0)) throw ConfigError("Newton tolerance must be > 0");
  Vector beta = beta0 ? *beta0 : Vector::Zero(p.M());
  if (beta.size() != p.M()) throw DimensionError("initial beta length must equal M");
  double L = dual_objective(p, beta);
  std::vector<double> residuals{residual(p, beta)};
  int it = 0;
  for (; it < max_iters && residuals.back() > tol; ++it) {
    Vector proposal;
    try {
      proposal = newton_step(p, beta, 1.0);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " at iteration " + std::to_string(it), it);
    }
    const Vector dir = proposal - beta;
    double step = damping;
    Vector next = beta + step * dir;
    double Ln = dual_objective(p, next);
    int halvings = 0;
    while (!(Ln >= L) && halvings < 50) {
      step *= 0.5;
      next = beta + step * dir;
      Ln = dual_objective(p, next);
      ++halvings;
    }
    if (!(Ln >= L)) break;  // no ascent possible at working precision
    beta = std::move(next);
    L = Ln;
    residuals.push_back(residual(p, beta));
  }
  RkhsSolution s = solution_at(p, beta);
  s.iterations = it;
  s.residuals = std::move(residuals);
  return s;
}

Vector evaluate_energy(const RkhsKaleProblem& p, const RkhsSolution& s, const Matrix& at) {
  const Vector mu = gaussian_kernel(at, p.X, p.bandwidth).rowwise().mean();
  Vector h = s.alpha * mu + gaussian_kernel(at, p.Y, p.bandwidth) * s.beta;
  return (h.array() + s.c).matrix();
}

double rkhs_kale_value(const RkhsSolution& s, const RkhsKaleProblem& p) {
  if (s.beta.size() != p.M()) throw DimensionError("solution does not match problem size");
  // mean_X h = alpha |mu|^2 + beta^T m + c; h(Y) = alpha m + K beta + c.
  const double mean_x = s.alpha * p.mu_norm2 + s.beta.dot(p.m) + s.c;
  const Vector hy = (s.alpha * p.m + p.K * s.beta).array() + s.c;
  return -mean_x - (-hy.array()).exp().mean() + 1.0;
}

RateResult rate_experiment(const Sampler& p_sampler, const Sampler& b_sampler,
                           const std::vector<Eigen::Index>& n_grid,
                           const std::vector<std::uint64_t>& seeds, double kl_true,
                           double bandwidth) {
  if (n_grid.size() < 4) throw ConfigError("rate experiment needs at least 4 grid points");
  for (std::size_t i = 1; i < n_grid.size(); ++i)
    if (n_grid[i] <= n_grid[i - 1]) throw ConfigError("rate experiment grid must increase");
  if (seeds.size() < 10) throw ConfigError("rate experiment needs at least 10 seeds");
  RateResult r;
  r.n_grid = n_grid;
  for (Eigen::Index n : n_grid) {
    std::vector<double> errs;
    const double lambda = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::uint64_t seed : seeds) {
      const Matrix X = p_sampler(n, seed);
      const Matrix Y = b_sampler(n, seed);
      const double bw = bandwidth > 0.0 ? bandwidth : median_bandwidth(Y);
      const RkhsKaleProblem prob = build_problem(X, Y, bw, lambda);
      const RkhsSolution sol = newton_solve(prob, 1.0, 100, 1e-10);
      const double v = rkhs_kale_value(sol, prob);
      const double err = std::abs(v - kl_true);
      r.cells.push_back({n, seed, lambda, v, kl_true, err});
      errs.push_back(err);
    }
    r.median_errors.push_back(median_of(std::move(errs)));
  }
  const auto k = static_cast<double>(n_grid.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    const double lx = std::log(static_cast<double>(n_grid[i]));
    const double ly = std::log(r.median_errors[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  r.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  return r;
}

void write_rate_csv(const std::filesystem::path& path, const RateResult& r) {
  std::vector<std::vector<double>> rows;
  for (const auto& c : r.cells)
    rows.push_back({static_cast<double>(c.n), static_cast<double>(c.seed), c.lambda, c.value,
                    c.kl_true, c.abs_error});
  io::write_series_csv(path, {"N", "seed", "lambda", "value", "kl_true", "abs_error"}, rows);
}

}  // namespace gebm::rkhs

#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gebm/bench/datasets.hpp"
#include "gebm/bench/metrics.hpp"
#include "gebm/error.hpp"
#include "gebm/random.hpp"

using namespace gebm;
using namespace gebm::bench;

namespace {

double log_normal_pdf(double x, double mu, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - (x - mu) * (x - mu) / (2.0 * var);
}

// Composite Simpson rule for the integral of p log(p/q).
double kl_quadrature(double mu1, double var1, double mu2, double var2) {
  const double lo = std::min(mu1, mu2) - 40.0, hi = std::max(mu1, mu2) + 40.0;
  const int n = 400000;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double lp = log_normal_pdf(x, mu1, var1), lq = log_normal_pdf(x, mu2, var2);
    const double f = std::exp(lp) * (lp - lq);
    acc += f * ((i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return acc * h / 3.0;
}

Eigen::VectorXd normals(Eigen::Index n, std::uint64_t seed, double shift = 0.0) {
  return (Rng(seed).normal_matrix(n, 1).array() + shift).matrix().col(0);
}

}  // namespace

TEST_CASE("gaussian KL closed form") {
  CHECK(gaussian_kl(0.3, 2.0, 0.3, 2.0) == 0.0);
  CHECK(gaussian_kl(0.0, 1.0, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  for (auto [m1, v1, m2, v2] : {std::array{0.0, 1.0, 1.0, 1.0}, std::array{0.5, 0.3, -1.0, 2.5},
                                std::array{2.0, 1.7, 1.0, 0.8}}) {
    CHECK(std::abs(gaussian_kl(m1, v1, m2, v2) - kl_quadrature(m1, v1, m2, v2)) < 1e-8);
  }
  Eigen::VectorXd mu1(2), var1(2), mu2(2), var2(2);
  mu1 << 0.0, 0.5;
  var1 << 1.0, 0.3;
  mu2 << 1.0, -1.0;
  var2 << 1.0, 2.5;
  CHECK(gaussian_kl(mu1, var1, mu2, var2) ==
        doctest::Approx(gaussian_kl(0.0, 1.0, 1.0, 1.0) + gaussian_kl(0.5, 0.3, -1.0, 2.5)));
  CHECK_THROWS_AS(gaussian_kl(0.0, 0.0, 0.0, 1.0), ConfigError);
}

TEST_CASE("W1 on sorted samples") {
  Eigen::VectorXd x = normals(1000, 1);
  CHECK(w1_1d(x, x) == 0.0);
  CHECK(w1_1d(Eigen::VectorXd::Zero(50), Eigen::VectorXd::Ones(70)) == 1.0);
  CHECK(w1_1d(normals(100000, 2), normals(100000, 3, 1.0)) == doctest::Approx(1.0).epsilon(0.02));
  // Symmetric and permutation invariant.
  Eigen::VectorXd y = normals(300, 4, 0.5);
  CHECK(w1_1d(x, y) == doctest::Approx(w1_1d(y, x)).epsilon(1e-12));
  Eigen::VectorXd rev = y.reverse();
  CHECK(w1_1d(x, rev) == w1_1d(x, y));
}

TEST_CASE("MMD two-sample test") {
  Matrix x = Rng(5).normal_matrix(500, 1);
  auto same = mmd2(x, x, 0.0, 200, 1);
  CHECK(same.value <= 3.0 * same.null_stderr);

  Matrix y = (Rng(6).normal_matrix(500, 1).array() + 3.0).matrix();
  auto far = mmd2(x, y, 0.0, 200, 1);
  CHECK(far.p_value < 0.005);
  CHECK(far.value > 0.0);

  // Row order does not change the statistic.
  Matrix xp = x.colwise().reverse(), yp = y.colwise().reverse();
  CHECK(mmd2(xp, yp, far.bandwidth, 200, 1).value == doctest::Approx(far.value).epsilon(1e-12));

  // Same law: p-values are not small for most seeds.
  int rejections = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto r = mmd2(Rng(100 + s).normal_matrix(200, 2), Rng(200 + s).normal_matrix(200, 2), 0.0, 200, s);
    rejections += r.p_value < 0.05;
  }
  CHECK(rejections <= 4);
  CHECK_THROWS_AS(mmd2(x.topRows(10), y, 1.0), ConfigError);
}

TEST_CASE("MMD unbiased statistic matches a direct double sum") {
  Matrix x = Rng(7).normal_matrix(25, 2), y = Rng(8).normal_matrix(30, 2);
  const double bw = 1.3;
  auto k = [&](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return std::exp(-(a - b).squaredNorm() / (2.0 * bw * bw));
  };
  double kxx = 0, kyy = 0, kxy = 0;
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 25; ++j)
      if (i != j) kxx += k(x.row(i), x.row(j));
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j)
      if (i != j) kyy += k(y.row(i), y.row(j));
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 30; ++j) kxy += k(x.row(i), y.row(j));
  const double expected = kxx / (25 * 24) + kyy / (30 * 29) - 2.0 * kxy / (25 * 30);
  CHECK(mmd2(x, y, bw, 200, 0).value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("line dataset") {
  auto d = make_line_dataset(5000, 3);
  CHECK(d.dim == 2);
  CHECK(d.val.rows() == 500);
  CHECK(d.test.rows() == 5000);
  for (const Matrix* m : {&d.train, &d.val, &d.test})
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      CHECK((*m)(i, 1) == kLineSlope * (*m)(i, 0) + kLineIntercept);
      CHECK(std::abs((*m)(i, 0)) <= 1.0);
    }
  const Eigen::ArrayXd t = d.train.col(0).array().abs();
  const double outer = (t > 0.6).cast<double>().mean(), inner = (t < 0.4).cast<double>().mean();
  CHECK(outer > inner);
  // Exact masses: P(|t| > 0.6) = 1 - 0.6^4, P(|t| < 0.4) = 0.4^4.
  CHECK(outer == doctest::Approx(1.0 - std::pow(0.6, 4)).epsilon(0.02));
  CHECK(inner == doctest::Approx(std::pow(0.4, 4)).epsilon(0.3));
  CHECK(make_line_dataset(5000, 3).train == d.train);
  CHECK(make_line_dataset(5000, 4).train != d.train);
  CHECK(d.train.row(0) != d.test.row(0));

  // The retained density integrates to one along the line.
  double acc = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) acc += std::exp(line_t_log_density(-1.0 + (i + 0.5) * 2.0 / n));
  CHECK(acc * 2.0 / n == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("ring dataset density integrates to one and matches samples") {
  auto d = make_ring_dataset(4000, 1);
  CHECK(d.val.rows() == 400);
  const int n = 400;
  const double lo = -6.0, h = 12.0 / n;
  Matrix grid(n * n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) grid.row(i * n + j) << lo + (i + 0.5) * h, lo + (j + 0.5) * h;
  CHECK(d.log_density(grid).array().exp().sum() * h * h == doctest::Approx(1.0).epsilon(1e-6));
  // Mean NLL of the samples equals the entropy estimate from a fresh draw.
  auto e = make_ring_dataset(4000, 2);
  CHECK(-d.log_density(d.test).mean() == doctest::Approx(-e.log_density(e.test).mean()).epsilon(0.03));
  CHECK(d.train.colwise().mean().norm() < 0.15);
}

TEST_CASE("gaussian dataset and lookup by name") {
  Eigen::VectorXd mu(1);
  mu << 1.0;
  auto d = make_gaussian_dataset(20000, 5, mu);
  CHECK(d.train.mean() == doctest::Approx(1.0).epsilon(0.03));
  CHECK(make_dataset("line", 10, 1).name == "line");
  CHECK(make_dataset("ring", 10, 1).name == "ring");
  CHECK_THROWS_AS(make_dataset("moons", 10, 1), ConfigError);
  CHECK_THROWS_AS(make_line_dataset(0, 1), ConfigError);
}

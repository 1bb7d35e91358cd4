#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace gebm::bench {

using Matrix = Eigen::MatrixXd;

/// KL(N(mu1, var1) || N(mu2, var2)) summed over independent coordinates.
double gaussian_kl(const Eigen::VectorXd& mu1, const Eigen::VectorXd& var1,
                   const Eigen::VectorXd& mu2, const Eigen::VectorXd& var2);
double gaussian_kl(double mu1, double var1, double mu2, double var2);

/// Mean absolute difference of sorted samples. The larger set is thinned to
/// the smaller size by taking evenly spaced order statistics.
double w1_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

struct MmdResult {
  /// Unbiased squared MMD.
  double value = 0.0;
  double p_value = 1.0;
  /// Standard deviation of the permutation null.
  double null_stderr = 0.0;
  double bandwidth = 0.0;
};

/// Median pairwise distance over the pooled rows (at most 1000 of them).
double mmd_median_bandwidth(const Matrix& x, const Matrix& y);

/// Unbiased MMD^2 with a Gaussian kernel and a permutation p-value,
/// (1 + #{null >= value}) / (1 + permutations). bandwidth <= 0 selects the
/// median heuristic. Needs at least 20 rows per batch.
MmdResult mmd2(const Matrix& x, const Matrix& y, double bandwidth = 0.0, int permutations = 200,
               std::uint64_t seed = 0);

}  // namespace gebm::bench

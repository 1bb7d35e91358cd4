#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "gebm/bench/metrics.hpp"

namespace gebm::bench {

struct SyntheticDataset {
  std::string name;
  Eigen::Index dim = 0;
  Matrix train, val, test;
  /// Exact log-density of a row, or empty when the law has none in R^dim.
  std::function<Eigen::VectorXd(const Matrix&)> log_density;
};

/// Validation rows for n training rows: 10%, at least 1, capped at 1000.
Eigen::Index validation_size(Eigen::Index n);

/// Line through the plane, x = (t, 0.5 t + 0.2), with t = s * U^(1/4):
/// a random sign times a Beta(4, 1) magnitude, density 2|t|^3 on [-1, 1].
inline constexpr double kLineSlope = 0.5;
inline constexpr double kLineIntercept = 0.2;
SyntheticDataset make_line_dataset(Eigen::Index n, std::uint64_t seed);
/// Draws of the line parameter t alone.
Eigen::VectorXd sample_line_t(Eigen::Index n, std::uint64_t seed, std::uint64_t stream);
/// log p(t) for the line parameter; -inf outside [-1, 1].
double line_t_log_density(double t);

/// Equal-weight mixture of four isotropic Gaussians at angles k*pi/2 on a
/// circle of the given radius.
SyntheticDataset make_ring_dataset(Eigen::Index n, std::uint64_t seed, double radius = 2.0,
                                   double stddev = 0.5);

/// Isotropic Gaussian with the given mean vector and unit variance.
SyntheticDataset make_gaussian_dataset(Eigen::Index n, std::uint64_t seed,
                                       const Eigen::VectorXd& mean);

SyntheticDataset make_dataset(const std::string& name, Eigen::Index n, std::uint64_t seed);

}  // namespace gebm::bench

#include "gebm/bench/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gebm/error.hpp"
#include "gebm/random.hpp"

namespace gebm::bench {

namespace {

constexpr std::uint64_t kTrain = 1, kVal = 2, kTest = 3;

std::uint64_t split_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t split) {
  return derive_stream(seed, {tag, split});
}

Matrix line_points(const Eigen::VectorXd& t) {
  Matrix x(t.size(), 2);
  x.col(0) = t;
  x.col(1) = (kLineSlope * t.array() + kLineIntercept).matrix();
  return x;
}

Matrix ring_points(Eigen::Index n, Rng& rng, double radius, double stddev) {
  Matrix x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double angle = static_cast<double>(rng.below(4)) * std::numbers::pi / 2.0;
    x(i, 0) = radius * std::cos(angle) + stddev * rng.normal();
    x(i, 1) = radius * std::sin(angle) + stddev * rng.normal();
  }
  return x;
}

}  // namespace

Eigen::Index validation_size(Eigen::Index n) {
  return std::clamp<Eigen::Index>(n / 10, 1, 1000);
}

Eigen::VectorXd sample_line_t(Eigen::Index n, std::uint64_t seed, std::uint64_t stream) {
  Rng rng(seed, stream);
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    t[i] = sign * std::pow(rng.uniform_pos(), 0.25);
  }
  return t;
}

double line_t_log_density(double t) {
  if (!(std::abs(t) <= 1.0) || t == 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(2.0) + 3.0 * std::log(std::abs(t));
}

SyntheticDataset make_line_dataset(Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("dataset size must be >= 1");
  constexpr std::uint64_t tag = 0x6c696e65;
  SyntheticDataset d;
  d.name = "line";
  d.dim = 2;
  d.train = line_points(sample_line_t(n, seed, split_stream(seed, tag, kTrain)));
  d.val = line_points(sample_line_t(validation_size(n), seed, split_stream(seed, tag, kVal)));
  d.test = line_points(sample_line_t(n, seed, split_stream(seed, tag, kTest)));
  // Density along the line, in the t coordinate.
  d.log_density = [](const Matrix& x) {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = line_t_log_density(x(i, 0));
    return out;
  };
  return d;
}

SyntheticDataset make_ring_dataset(Eigen::Index n, std::uint64_t seed, double radius,
                                   double stddev) {
  if (n < 1) throw ConfigError("dataset size must be >= 1");
  if (!(stddev > 0.0)) throw ConfigError("ring stddev must be > 0");
  constexpr std::uint64_t tag = 0x72696e67;
  SyntheticDataset d;
  d.name = "ring";
  d.dim = 2;
  Rng r_train(seed, split_stream(seed, tag, kTrain)), r_val(seed, split_stream(seed, tag, kVal)),
      r_test(seed, split_stream(seed, tag, kTest));
  d.train = ring_points(n, r_train, radius, stddev);
  d.val = ring_points(validation_size(n), r_val, radius, stddev);
  d.test = ring_points(n, r_test, radius, stddev);
  d.log_density = [radius, stddev](const Matrix& x) {
    const double s2 = stddev * stddev;
    const double norm = -std::log(2.0 * std::numbers::pi * s2) - std::log(4.0);
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double terms[4], hi = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < 4; ++k) {
        const double a = k * std::numbers::pi / 2.0;
        const double dx = x(i, 0) - radius * std::cos(a), dy = x(i, 1) - radius * std::sin(a);
        terms[k] = -(dx * dx + dy * dy) / (2.0 * s2);
        hi = std::max(hi, terms[k]);
      }
      double s = 0.0;
      for (double t : terms) s += std::exp(t - hi);
      out[i] = norm + hi + std::log(s);
    }
    return out;
  };
  return d;
}

SyntheticDataset make_gaussian_dataset(Eigen::Index n, std::uint64_t seed,
                                       const Eigen::VectorXd& mean) {
  if (n < 1) throw ConfigError("dataset size must be >= 1");
  constexpr std::uint64_t tag = 0x67617573;
  SyntheticDataset d;
  d.name = "gaussian";
  d.dim = mean.size();
  auto draw = [&](Eigen::Index rows, std::uint64_t split) {
    Matrix x = Rng(seed, split_stream(seed, tag, split)).normal_matrix(rows, d.dim);
    return Matrix(x.rowwise() + mean.transpose());
  };
  d.train = draw(n, kTrain);
  d.val = draw(validation_size(n), kVal);
  d.test = draw(n, kTest);
  d.log_density = [mean](const Matrix& x) {
    const double k = static_cast<double>(mean.size());
    return Eigen::VectorXd(
        (-0.5 * (x.rowwise() - mean.transpose()).rowwise().squaredNorm().array() -
         0.5 * k * std::log(2.0 * std::numbers::pi))
            .matrix());
  };
  return d;
}

SyntheticDataset make_dataset(const std::string& name, Eigen::Index n, std::uint64_t seed) {
  if (name == "line") return make_line_dataset(n, seed);
  if (name == "ring") return make_ring_dataset(n, seed);
  if (name == "gaussian") return make_gaussian_dataset(n, seed, Eigen::VectorXd::Zero(1));
  throw ConfigError("unknown dataset '" + name + "' (expected line, ring or gaussian)");
}

}  // namespace gebm::bench

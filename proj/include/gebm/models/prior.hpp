#pragma once

#include <nlohmann/json_fwd.hpp>

#include "gebm/ad/param_vector.hpp"
#include "gebm/random.hpp"

namespace gebm::models {

using ad::Matrix;
using ad::Vector;

/// Diagonal Gaussian latent prior.
class GaussianPrior {
 public:
  explicit GaussianPrior(int dim = 1);
  GaussianPrior(Vector mean, Vector stdev);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Vector& stdev() const { return stdev_; }
  bool is_standard() const;

  /// Row-wise log density.
  Vector log_density(const Matrix& z) const;
  /// Row-wise grad_z log density: -(z - mean) / stdev^2.
  Matrix score(const Matrix& z) const;
  Matrix sample(Eigen::Index n, Rng& rng) const;

 private:
  Vector mean_;
  Vector stdev_;
};

void to_json(nlohmann::json& j, const GaussianPrior& p);
void from_json(const nlohmann::json& j, GaussianPrior& p);

}  // namespace gebm::models

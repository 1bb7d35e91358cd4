#pragma once

#include <cstdint>

#include "gebm/models/energy.hpp"
#include "gebm/models/generator.hpp"
#include "gebm/models/prior.hpp"

namespace gebm::models {

struct LatentSample {
  Matrix z;
  Matrix x;
};

/// Implicit base: x = B_theta(z), z ~ prior.
class BaseModel {
 public:
  BaseModel(GaussianPrior prior, GeneratorPtr generator, ad::ParamVector theta);

  const GaussianPrior& prior() const { return prior_; }
  const Generator& generator() const { return *generator_; }
  const GeneratorPtr& generator_ptr() const { return generator_; }
  const ad::ParamVector& theta() const { return theta_; }
  int latent_dim() const { return prior_.dim(); }
  int data_dim() const { return generator_->output_dim(); }

  BaseModel with_params(ad::ParamVector theta) const;

  /// n latents from the prior (one seeded stream) and their images.
  LatentSample sample(Eigen::Index n, std::uint64_t seed) const;
  Matrix generate(const Matrix& z) const;
  bool has_density() const { return generator_->has_density() && prior_.is_standard(); }
  /// r(x) = -log density, flow bases only.
  Vector neg_log_density(const Matrix& x) const;

 private:
  GaussianPrior prior_;
  GeneratorPtr generator_;
  ad::ParamVector theta_;
};

nlohmann::json base_descriptor(const BaseModel& base);

/// Rebuilds a family object from its descriptor.
GeneratorPtr make_generator(const nlohmann::json& descriptor);
/// `theta` is required for families that embed base parameters.
EnergyPtr make_energy(const nlohmann::json& descriptor, const ad::ParamVector* theta = nullptr);

}  // namespace gebm::models

#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "gebm/models/flow.hpp"
#include "gebm/models/mlp.hpp"
#include "gebm/models/prior.hpp"

namespace gebm::models {

/// Generator map B_theta: latent (n x q) -> data (n x d).
class Generator {
 public:
  virtual ~Generator() = default;

  virtual std::string family() const = 0;
  virtual int latent_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual std::shared_ptr<const ad::ParamLayout> layout() const = 0;
  virtual ad::ParamVector init_params() const = 0;
  virtual ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var z) const = 0;
  virtual nlohmann::json descriptor() const = 0;

  /// Flows expose an exact density exp(-r) over the data space.
  virtual bool has_density() const { return false; }
  virtual ad::Var neg_log_density(ad::Tape& tape, const ad::BoundParams& params,
                                  ad::Var x) const;
};

using GeneratorPtr = std::shared_ptr<const Generator>;

class IdentityGenerator final : public Generator {
 public:
  explicit IdentityGenerator(int dim);
  std::string family() const override { return "identity"; }
  int latent_dim() const override { return dim_; }
  int output_dim() const override { return dim_; }
  std::shared_ptr<const ad::ParamLayout> layout() const override { return layout_; }
  ad::ParamVector init_params() const override { return ad::ParamVector::zeros(layout_); }
  ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var z) const override;
  nlohmann::json descriptor() const override { return {{"family", "identity"}, {"dim", dim_}}; }

 private:
  int dim_;
  std::shared_ptr<const ad::ParamLayout> layout_;
};

class MlpGenerator final : public Generator {
 public:
  explicit MlpGenerator(MlpSpec spec);
  std::string family() const override { return "mlp"; }
  int latent_dim() const override { return mlp_.spec().input_dim; }
  int output_dim() const override { return mlp_.spec().output_dim; }
  std::shared_ptr<const ad::ParamLayout> layout() const override { return layout_; }
  ad::ParamVector init_params() const override;
  ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var z) const override;
  nlohmann::json descriptor() const override { return {{"family", "mlp"}, {"mlp", mlp_.spec()}}; }
  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
  std::shared_ptr<const ad::ParamLayout> layout_;
};

/// Real-NVP forward map; must be paired with a standard-normal prior.
class FlowGenerator final : public Generator {
 public:
  explicit FlowGenerator(RealNvpSpec spec);
  std::string family() const override { return "flow"; }
  int latent_dim() const override { return flow_.spec().dim; }
  int output_dim() const override { return flow_.spec().dim; }
  std::shared_ptr<const ad::ParamLayout> layout() const override { return layout_; }
  ad::ParamVector init_params() const override;
  ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var z) const override;
  nlohmann::json descriptor() const override { return {{"family", "flow"}, {"flow", flow_.spec()}}; }
  bool has_density() const override { return true; }
  ad::Var neg_log_density(ad::Tape& tape, const ad::BoundParams& params,
                          ad::Var x) const override;
  const RealNvpFlow& flow() const { return flow_; }

 private:
  RealNvpFlow flow_;
  std::shared_ptr<const ad::ParamLayout> layout_;
};

}  // namespace gebm::models

#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "gebm/models/flow.hpp"
#include "gebm/models/mlp.hpp"

namespace gebm::models {

/// A parametric energy family E_psi: R^d -> R, evaluated row-wise.
class Energy {
 public:
  virtual ~Energy() = default;

  virtual std::string family() const = 0;
  virtual int input_dim() const = 0;
  virtual std::shared_ptr<const ad::ParamLayout> layout() const = 0;
  virtual ad::ParamVector init_params() const = 0;
  /// Per-row energies (n x 1).
  virtual ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const = 0;
  /// Descriptor for models.json; make_energy() inverts it.
  virtual nlohmann::json descriptor() const = 0;

  /// Energies that embed the base's parameters return a copy bound to the
  /// new base parameters; others return nullptr.
  virtual std::shared_ptr<const Energy> rebased(const ad::ParamVector& theta) const {
    (void)theta;
    return nullptr;
  }
};

using EnergyPtr = std::shared_ptr<const Energy>;

/// E == 0, no parameters.
class ZeroEnergy final : public Energy {
 public:
  explicit ZeroEnergy(int dim);
  std::string family() const override { return "zero"; }
  int input_dim() const override { return dim_; }
  std::shared_ptr<const ad::ParamLayout> layout() const override { return layout_; }
  ad::ParamVector init_params() const override;
  ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const override;
  nlohmann::json descriptor() const override;

 private:
  int dim_;
  std::shared_ptr<const ad::ParamLayout> layout_;
};

/// Scalar-output MLP energy.
class MlpEnergy final : public Energy {
 public:
  explicit MlpEnergy(MlpSpec spec);
  std::string family() const override { return "mlp"; }
  int input_dim() const override { return mlp_.spec().input_dim; }
  std::shared_ptr<const ad::ParamLayout> layout() const override { return layout_; }
  ad::ParamVector init_params() const override;
  ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const override;
  nlohmann::json descriptor() const override;
  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
  std::shared_ptr<const ad::ParamLayout> layout_;
};

/// Separable quadratic E(x) = sum_j a_j x_j^2 + b_j x_j + c. Contains the
/// exact log-ratio of any two diagonal Gaussians.
class QuadraticEnergy final : public Energy {
 public:
  explicit QuadraticEnergy(int dim);
  std::string family() const override { return "quadratic"; }
  int input_dim() const override { return dim_; }
  std::shared_ptr<const ad::ParamLayout> layout() const override { return layout_; }
  /// All zeros.
  ad::ParamVector init_params() const override;
  ad::ParamVector make_params(const Vector& a, const Vector& b, double c) const;
  ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const override;
  nlohmann::json descriptor() const override;

 private:
  int dim_;
  std::shared_ptr<const ad::ParamLayout> layout_;
};

/// h(x) = -log density of a Real-NVP flow; the EBM exp(-h) is normalized.
class FlowEnergy final : public Energy {
 public:
  explicit FlowEnergy(RealNvpSpec spec);
  std::string family() const override { return "flow"; }
  int input_dim() const override { return flow_.spec().dim; }
  std::shared_ptr<const ad::ParamLayout> layout() const override { return layout_; }
  ad::ParamVector init_params() const override;
  ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const override;
  nlohmann::json descriptor() const override;
  const RealNvpFlow& flow() const { return flow_; }

 private:
  RealNvpFlow flow_;
  std::shared_ptr<const ad::ParamLayout> layout_;
};

/// E(x) = h_psi(x) - r_theta(x): an EBM exp(-h) written as a GEBM over a
/// flow base with density exp(-r). theta is held fixed inside the energy.
class FlowRatioEnergy final : public Energy {
 public:
  FlowRatioEnergy(RealNvpSpec energy_flow, RealNvpSpec base_flow, ad::ParamVector theta);
  std::string family() const override { return "flow_ratio"; }
  int input_dim() const override { return h_.spec().dim; }
  std::shared_ptr<const ad::ParamLayout> layout() const override { return layout_; }
  ad::ParamVector init_params() const override;
  ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const override;
  nlohmann::json descriptor() const override;
  std::shared_ptr<const Energy> rebased(const ad::ParamVector& theta) const override;
  const RealNvpFlow& energy_flow() const { return h_; }

 private:
  RealNvpFlow h_;
  RealNvpFlow r_;
  ad::ParamVector theta_;
  std::shared_ptr<const ad::ParamLayout> layout_;
};

/// E_psi(x) row-wise, no gradients; evaluated in chunks.
Vector energy_eval(const Energy& energy, const ad::ParamVector& psi, const Matrix& x);
/// grad_x E_psi(x) row-wise.
Matrix energy_input_grad(const Energy& energy, const ad::ParamVector& psi, const Matrix& x);

}  // namespace gebm::models

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gebm/models/mlp.hpp"

namespace gebm::models {

/// Bound on coupling log-scales: s = kScaleBound * tanh(net(x)).
inline constexpr double kScaleBound = 2.0;

struct RealNvpSpec {
  int dim = 2;
  int num_layers = 4;
  std::vector<int> hidden_dims{32, 32};
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;
  /// Zero the output layer of every shift/scale network so the flow starts
  /// as the identity map.
  bool identity_init = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const RealNvpSpec& s);
void from_json(const nlohmann::json& j, RealNvpSpec& s);

/// Real-NVP flow over a standard-normal base of dimension `dim`.
///
/// Layer l keeps coordinates j with (j + l) even and transforms the rest:
///   y = x * exp(s) + t,  s = 2 tanh(S(x*m)) * (1-m),  t = T(x*m) * (1-m).
/// forward() maps latent z to data x; neg_log_density() returns
///   r(x) = |z|^2/2 + (d/2) ln 2pi + sum_l sum_j s_l,j
/// with z obtained from the inverse pass, so the model density is exp(-r).
class RealNvpFlow {
 public:
  RealNvpFlow(RealNvpSpec spec, std::string prefix);

  const RealNvpSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }
  /// 1 for kept (conditioning) coordinates, 0 for transformed ones.
  Matrix mask(int layer) const;

  void declare(ad::ParamLayout& layout) const;
  void initialize(const ad::ParamLayout& layout, Vector& values) const;

  /// z -> x. If `log_det` is non-null it receives the per-row log|det dx/dz|.
  ad::Var forward(ad::Tape& tape, const ad::BoundParams& params, ad::Var z,
                  ad::Var* log_det = nullptr) const;
  /// x -> z. If `log_det` is non-null it receives the per-row log|det dz/dx|.
  ad::Var inverse(ad::Tape& tape, const ad::BoundParams& params, ad::Var x,
                  ad::Var* log_det = nullptr) const;
  /// Per-row r(x) = -log density (n x 1).
  ad::Var neg_log_density(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const;

 private:
  std::pair<ad::Var, ad::Var> shift_scale(ad::Tape& tape, const ad::BoundParams& params,
                                          int layer, ad::Var kept) const;

  RealNvpSpec spec_;
  std::string prefix_;
  std::vector<Mlp> scale_nets_;
  std::vector<Mlp> shift_nets_;
};

/// Convenience: evaluates r(x) row-wise without gradients.
Vector flow_neg_log_density(const RealNvpFlow& flow, const ad::ParamVector& params,
                            const Matrix& x);
/// Convenience: z -> x without gradients.
Matrix flow_forward(const RealNvpFlow& flow, const ad::ParamVector& params, const Matrix& z);
/// Convenience: x -> z without gradients.
Matrix flow_inverse(const RealNvpFlow& flow, const ad::ParamVector& params, const Matrix& x);

}  // namespace gebm::models

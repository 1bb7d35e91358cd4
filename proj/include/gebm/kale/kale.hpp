#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gebm/models/base_model.hpp"
#include "gebm/models/energy.hpp"
#include "gebm/training/optim.hpp"

namespace gebm::kale {

using ad::Matrix;
using ad::ParamVector;
using ad::Vector;
using models::Energy;

/// Energy parameters plus the variational log-partition A.
struct EnergyState {
  ParamVector psi;
  double A = 0.0;
};

struct RegularizerConfig {
  /// lambda_reg; zero turns every regularization term off exactly.
  double weight = 0.0;
  bool l2_enabled = true;
  bool grad_penalty_enabled = true;
  /// Input-space step of the penalty-gradient surrogate.
  double fd_step = 1e-4;
};

void to_json(nlohmann::json& j, const RegularizerConfig& c);
void from_json(const nlohmann::json& j, RegularizerConfig& c);

Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& idx);
/// n rows drawn with replacement; all of `m` when n >= rows.
Matrix minibatch(const Matrix& m, Eigen::Index n, Rng& rng);

/// -mean E(X) - logsumexp(-E(Y)) + ln M.
double dv_estimate(const Energy& energy, const ParamVector& psi, const Matrix& x, const Matrix& y);

/// Delta-method standard error of dv_estimate:
///   sqrt(var E(X) / N + var w / (M mean(w)^2)),  w = exp(-E(Y)).
double dv_stderr(const Energy& energy, const ParamVector& psi, const Matrix& x, const Matrix& y);

/// -mean(E(X) + A) - mean(exp(-(E(Y) + A))) + 1. Overflow of the exponential
/// raises DomainError.
double f_objective(const Energy& energy, const ParamVector& psi, double A, const Matrix& x,
                   const Matrix& y);

/// A~ = logsumexp(-E(Y)) - ln M, the batch log-partition.
double empirical_log_partition(const Energy& energy, const ParamVector& psi, const Matrix& y);

/// A - lr (exp(A - A~) - 1).
double amortized_A_update(double A, double A_tilde, double lr);

/// Computes A~ on `y`; an empty `A` (first call) initializes to A~.
double amortized_A_update(std::optional<double> A, const Matrix& y, const Energy& energy,
                          const ParamVector& psi, double lr);

/// Half of the penalty probe comes from the data rows, half from the base
/// rows (leading rows of each, min(N, M) in total).
Matrix probe_batch(const Matrix& x, const Matrix& y);

/// I(psi)^2 = |psi|^2 / d_psi + mean over probe rows of |grad_x E|^2, each
/// term subject to its enable flag (the weight is not applied).
double regularizer(const Energy& energy, const ParamVector& psi, const Matrix& probe,
                   const RegularizerConfig& config = {});

/// Gradient of I(psi)^2. The L2 part is exact. The penalty part uses
///   grad_psi |g_p|^2 = 2 |g_p| grad_psi [E(x_p + h u_p) - E(x_p - h u_p)] / 2h
/// with g_p = grad_x E(x_p) and u_p = g_p / |g_p| held fixed, so only
/// first-order reverse passes are needed.
ParamVector regularizer_grad(const Energy& energy, const ParamVector& psi, const Matrix& probe,
                             const RegularizerConfig& config = {});

struct EnergyLossGrad {
  /// Descent direction for psi: -grad F^ + lambda_reg grad I^2.
  ParamVector g_psi;
  /// exp(A - A~) - 1.
  double g_A = 0.0;
  /// F^ at the incoming state.
  double objective = 0.0;
  double A_tilde = 0.0;
};

EnergyLossGrad energy_loss_grad(const Energy& energy, const EnergyState& state, const Matrix& x,
                                const Matrix& y, const RegularizerConfig& reg);

struct BaseGradient {
  /// grad_theta of -logsumexp(-E(B_theta(Z))); descending it lowers KALE.
  ParamVector grad;
  /// Empirical log-partition of the energy on the pushforward batch.
  double log_partition = 0.0;
};

/// Energy parameters are frozen; only the generator path depends on theta.
BaseGradient base_gradient(const models::BaseModel& base, const Energy& energy,
                           const ParamVector& psi, const Matrix& z);

struct KaleConfig {
  int steps = 2000;
  Eigen::Index batch_x = 256;
  Eigen::Index batch_y = 256;
  double lr = 1e-3;
  double lr_A = 0.1;
  training::AdamConfig adam{};
  RegularizerConfig reg{};
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const KaleConfig& c);
void from_json(const nlohmann::json& j, KaleConfig& c);

struct KaleTraceRow {
  int step;
  double objective;
  double A;
  double A_tilde;
};

struct KaleEstimate {
  double value = 0.0;
  EnergyState state;
  std::vector<KaleTraceRow> trace;
  KaleConfig config;
  std::string family;
};

/// Maximizes F^ over the energy family by Adam on minibatches of `x` and
/// `y` with the amortized A update. On return the state's A is the
/// log-partition on all of `y`, and `value` is F^ on the full sets there.
/// A non-finite objective raises DivergenceError with the step index.
KaleEstimate kale(const Matrix& x, const Matrix& y, const models::EnergyPtr& energy,
                  const KaleConfig& config, std::optional<ParamVector> init = std::nullopt);

nlohmann::json to_json(const KaleEstimate& e);
/// step,objective,A,A_tilde
void write_trace_csv(const std::filesystem::path& path, const KaleEstimate& e);

}  // namespace gebm::kale

#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gebm/models/base_model.hpp"
#include "gebm/models/energy.hpp"
#include "gebm/training/optim.hpp"

namespace gebm::training {

using ad::Matrix;
using ad::Vector;

/// Shared by the maximum-likelihood and contrastive-divergence baselines.
struct DensityConfig {
  int steps = 2000;
  Eigen::Index batch = 100;
  double lr = 1e-3;
  AdamConfig adam{0.5, 0.9, 1e-8};
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  /// Training NLL over the whole data set is recorded every eval_every steps.
  int eval_every = 100;
  /// CD negatives: Langevin steps and step size, started from the data batch.
  int langevin_steps = 100;
  double langevin_step_size = 1e-2;

  void validate() const;
};

void to_json(nlohmann::json& j, const DensityConfig& c);
void from_json(const nlohmann::json& j, DensityConfig& c);

struct DensityTrainResult {
  ad::ParamVector params;
  /// (step, mean NLL on the training data).
  std::vector<std::pair<int, double>> history;
};

/// Mean r(x) of a flow base over the rows of x.
double flow_nll(const models::BaseModel& flow_base, const Matrix& x);

/// Adam on the exact NLL mean r(x) over data minibatches.
DensityTrainResult train_flow_ml(const Matrix& data, const models::BaseModel& flow_base,
                                 const DensityConfig& config);

/// Overdamped Langevin in data space on exp(-h):
///   x <- x - lambda grad h(x) + sqrt(2 lambda) W.
Matrix langevin_negatives(const models::Energy& h, const ad::ParamVector& psi, Matrix x, int steps,
                          double step_size, Rng& rng);

/// mean grad_psi h(positives) - mean grad_psi h(negatives): the descent
/// direction of the CD surrogate.
ad::ParamVector cd_gradient(const models::Energy& h, const ad::ParamVector& psi,
                            const Matrix& positives, const Matrix& negatives);

/// Contrastive divergence: negatives from langevin_negatives started at the
/// data batch. `h` must be a normalized model (FlowEnergy) for the recorded
/// NLL to be meaningful.
DensityTrainResult train_ebm_cd(const Matrix& data, const models::EnergyPtr& h,
                                const ad::ParamVector& init, const DensityConfig& config);

/// log mean exp(-E(B(Z))) over n latents from the prior, evaluated in chunks.
double mc_log_partition(const models::BaseModel& base, const models::Energy& energy,
                        const ad::ParamVector& psi, Eigen::Index n, std::uint64_t seed);

/// mean over rows of E(x) + r(x) + A_true, with A_true = mc_log_partition
/// on `mc_samples` latents.
double eval_nll_gebm(const models::BaseModel& flow_base, const models::Energy& energy,
                     const ad::ParamVector& psi, const Matrix& test,
                     Eigen::Index mc_samples = 1000000, std::uint64_t seed = 0);

}  // namespace gebm::training

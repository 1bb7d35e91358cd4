#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gebm/error.hpp"
#include "gebm/kale/kale.hpp"
#include "gebm/models/base_model.hpp"
#include "gebm/training/optim.hpp"

namespace gebm::training {

using ad::Matrix;

struct TrainConfig {
  int base_steps = 1000;
  int energy_steps = 5;
  /// Extra energy steps before the base steps k = 0, burst_every, 2 burst_every, ...
  /// burst_every <= 0 bursts only at k = 0.
  int burst_steps = 100;
  int burst_every = 500;
  Eigen::Index batch_data = 100;
  Eigen::Index batch_base = 2000;
  double lr_energy = 1e-4;
  double lr_base = 1e-4;
  double lr_A = 0.1;
  AdamConfig adam{0.5, 0.9, 1e-8};
  kale::RegularizerConfig reg{};
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  /// Validation KALE and the scheduler run every eval_every base steps.
  int eval_every = 200;
  Eigen::Index val_base_samples = 2000;
  int scheduler_patience = 3;
  double scheduler_factor = 0.8;

  void validate() const;
  /// Energy updates performed before base step k.
  int energy_steps_at(long k) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct HistoryRow {
  long step;
  double objective;
  double A;
  double A_tilde;
  double val_kale;
  double lr;
};

struct TrainState {
  ad::ParamVector theta;
  ad::ParamVector psi;
  double A = 0.0;
  bool A_initialized = false;
  AdamMoments base_moments;
  AdamMoments energy_moments;
  long base_step = 0;
  long energy_step = 0;
  SchedulerState scheduler;
  std::vector<HistoryRow> history;
};

/// Fresh state: the models' own parameters, zero moments, lrs from config.
TrainState initial_state(const models::BaseModel& base, const ad::ParamVector& psi,
                         const TrainConfig& config);

/// Base and energy as they stand after training. Energies that embed the
/// base parameters are rebased onto the final theta.
struct GebmModel {
  models::BaseModel base;
  models::EnergyPtr energy;
};

struct TrainResult {
  TrainState state;
  GebmModel model;
};

/// Called after every completed base step.
using TrainObserver = std::function<void(const TrainState&, const GebmModel&)>;

/// Alternating optimization: before base step k, energy_steps_at(k) updates
/// of psi (Adam on the regularized KALE-F loss) each followed by the
/// amortized A update, then one Adam step of theta along the base gradient
/// on fresh latents. Runs from state.base_step up to config.base_steps.
/// Each step draws from its own stream derived from (seed, step indices), so
/// resuming from a saved state reproduces an uninterrupted run exactly.
/// A non-finite loss raises TrainDiverged carrying the last finite state.
TrainResult train_gebm(const Matrix& data, const Matrix& val, const models::BaseModel& base,
                       const models::EnergyPtr& energy, TrainState state,
                       const TrainConfig& config, const TrainObserver& observer = {});

class TrainDiverged : public DivergenceError {
 public:
  TrainDiverged(const std::string& what, long step, TrainState state)
      : DivergenceError(what, step), state_(std::move(state)) {}
  const TrainState& state() const { return state_; }

 private:
  TrainState state_;
};

/// Validation metric: the DV estimate of KALE between `val` and fresh base
/// samples under the current energy.
double validation_kale(const GebmModel& model, const ad::ParamVector& psi, const Matrix& val,
                       Eigen::Index base_samples, std::uint64_t seed);

/// models.json, base/{manifest.json,params.bin}, energy/{...} and trainstate.json.
void save_checkpoint(const std::filesystem::path& dir, const GebmModel& model, const TrainState& state,
                     const TrainConfig& config);

struct Checkpoint {
  GebmModel model;
  TrainState state;
  TrainConfig config;
};

/// Raises ParseError on missing or malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// step,objective,A,A_tilde,val_kale,lr
void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows);

}  // namespace gebm::training

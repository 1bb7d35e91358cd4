#pragma once

#include <nlohmann/json_fwd.hpp>

#include "gebm/ad/param_vector.hpp"

namespace gebm::training {

using ad::ParamVector;
using ad::Vector;

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// First/second moment estimates and the number of steps taken.
struct AdamMoments {
  Vector m;
  Vector v;
  long step = 0;

  static AdamMoments zeros(Eigen::Index n) { return {Vector::Zero(n), Vector::Zero(n), 0}; }
};

struct AdamResult {
  ParamVector params;
  AdamMoments moments;
};

/// One bias-corrected Adam descent step.
AdamResult adam_step(const ParamVector& params, const ParamVector& grad, const AdamMoments& moments,
                     double lr, const AdamConfig& config = {});

/// Rescales `grad` so its Euclidean norm is at most `max_norm` (no-op for
/// max_norm <= 0).
ParamVector clip_by_norm(const ParamVector& grad, double max_norm);

/// Multiplies both learning rates by `factor` after `patience` consecutive
/// evaluations in which the metric did not improve on the previous one.
struct SchedulerState {
  double lr_energy = 0.0;
  double lr_base = 0.0;
  double previous = 0.0;
  bool has_previous = false;
  int failures = 0;
  int patience = 3;
  double factor = 0.8;
  int reductions = 0;
};

SchedulerState lr_scheduler_step(SchedulerState state, double current_metric);

void to_json(nlohmann::json& j, const AdamMoments& m);
void from_json(const nlohmann::json& j, AdamMoments& m);
void to_json(nlohmann::json& j, const SchedulerState& s);
void from_json(const nlohmann::json& j, SchedulerState& s);

}  // namespace gebm::training

#include "gebm/training/optim.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "gebm/error.hpp"

namespace gebm::training {

AdamResult adam_step(const ParamVector& params, const ParamVector& grad, const AdamMoments& moments,
                     double lr, const AdamConfig& config) {
  if (grad.size() != params.size()) throw DimensionError("adam: gradient length mismatch");
  AdamMoments next = moments;
  if (next.m.size() == 0) next = AdamMoments::zeros(params.size());
  if (next.m.size() != params.size()) throw DimensionError("adam: moment length mismatch");
  const Vector& g = grad.values();
  next.step += 1;
  next.m = config.beta1 * next.m + (1.0 - config.beta1) * g;
  next.v = config.beta2 * next.v + (1.0 - config.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(next.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(next.step));
  Vector update = (next.m.array() / c1) / ((next.v.array() / c2).sqrt() + config.eps);
  return {params.with_values(params.values() - lr * update), std::move(next)};
}

ParamVector clip_by_norm(const ParamVector& grad, double max_norm) {
  if (max_norm <= 0.0) return grad;
  const double n = grad.values().norm();
  if (!(n > max_norm)) return grad;
  return grad.with_values(grad.values() * (max_norm / n));
}

SchedulerState lr_scheduler_step(SchedulerState state, double current_metric) {
  if (!std::isfinite(current_metric)) throw ConfigError("scheduler metric must be finite");
  if (state.has_previous) {
    if (current_metric >= state.previous) {
      state.failures += 1;
      if (state.failures >= state.patience) {
        state.lr_energy *= state.factor;
        state.lr_base *= state.factor;
        state.failures = 0;
        state.reductions += 1;
      }
    } else {
      state.failures = 0;
    }
  }
  state.previous = current_metric;
  state.has_previous = true;
  return state;
}

namespace {

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const nlohmann::json& j) {
  auto s = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
}

}  // namespace

void to_json(nlohmann::json& j, const AdamMoments& m) {
  j = {{"m", vec_json(m.m)}, {"v", vec_json(m.v)}, {"step", m.step}};
}

void from_json(const nlohmann::json& j, AdamMoments& m) {
  m.m = json_vec(j.at("m"));
  m.v = json_vec(j.at("v"));
  m.step = j.at("step").get<long>();
}

void to_json(nlohmann::json& j, const SchedulerState& s) {
  j = {{"lr_energy", s.lr_energy}, {"lr_base", s.lr_base},   {"previous", s.previous},
       {"has_previous", s.has_previous}, {"failures", s.failures}, {"patience", s.patience},
       {"factor", s.factor},       {"reductions", s.reductions}};
}

void from_json(const nlohmann::json& j, SchedulerState& s) {
  s.lr_energy = j.at("lr_energy").get<double>();
  s.lr_base = j.at("lr_base").get<double>();
  s.previous = j.at("previous").get<double>();
  s.has_previous = j.at("has_previous").get<bool>();
  s.failures = j.at("failures").get<int>();
  s.patience = j.at("patience").get<int>();
  s.factor = j.at("factor").get<double>();
  s.reductions = j.at("reductions").get<int>();
}

}  // namespace gebm::training

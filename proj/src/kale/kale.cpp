#include "gebm/kale/kale.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "gebm/error.hpp"
#include "gebm/io/csv.hpp"
#include "gebm/io/json_util.hpp"

namespace gebm::kale {

using ad::Tape;
using ad::Var;

namespace {

void require_rows(const Matrix& m, const char* what) {
  if (m.rows() < 1) throw ConfigError(std::string(what) + " batch is empty");
}

void require_width(const Energy& energy, const Matrix& m, const char* what) {
  if (m.cols() != energy.input_dim())
    throw DimensionError(std::string(what) + " batch has " + std::to_string(m.cols()) +
                         " columns, energy expects " + std::to_string(energy.input_dim()));
}

Var log_partition_var(Tape& t, const Energy& energy, const ad::BoundParams& p, const Matrix& y) {
  Var ey = energy.apply(t, p, t.constant(y));
  return ad::logsumexp(-ey) - std::log(static_cast<double>(y.rows()));
}

Var f_objective_var(Tape& t, const Energy& energy, const ad::BoundParams& p, double A,
                    const Matrix& x, const Matrix& y) {
  Var ex = energy.apply(t, p, t.constant(x));
  Var ey = energy.apply(t, p, t.constant(y));
  return -(ad::mean(ex) + A) - ad::mean(ad::exp(-(ey + A))) + 1.0;
}

}  // namespace

Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

Matrix minibatch(const Matrix& m, Eigen::Index n, Rng& rng) {
  if (n >= m.rows()) return m;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m.rows())));
  return take_rows(m, idx);
}

double dv_estimate(const Energy& energy, const ParamVector& psi, const Matrix& x, const Matrix& y) {
  require_rows(x, "data");
  require_rows(y, "base");
  require_width(energy, x, "data");
  require_width(energy, y, "base");
  Tape t;
  auto p = t.bind(psi, false);
  Var ex = energy.apply(t, p, t.constant(x));
  return t.scalar(-ad::mean(ex) - log_partition_var(t, energy, p, y));
}

double dv_stderr(const Energy& energy, const ParamVector& psi, const Matrix& x, const Matrix& y) {
  require_rows(x, "data");
  require_rows(y, "base");
  const Vector ex = models::energy_eval(energy, psi, x);
  const Vector ey = models::energy_eval(energy, psi, y);
  auto var = [](const Vector& v) {
    if (v.size() < 2) return 0.0;
    return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
  };
  // Shift before exponentiating; the ratio var(w)/mean(w)^2 is shift-free.
  const Vector w = (-(ey.array() - ey.minCoeff())).exp().matrix();
  const double mw = w.mean();
  return std::sqrt(var(ex) / static_cast<double>(x.rows()) +
                   var(w) / (static_cast<double>(y.rows()) * mw * mw));
}

double f_objective(const Energy& energy, const ParamVector& psi, double A, const Matrix& x,
                   const Matrix& y) {
  require_rows(x, "data");
  require_rows(y, "base");
  require_width(energy, x, "data");
  require_width(energy, y, "base");
  Tape t;
  auto p = t.bind(psi, false);
  return t.scalar(f_objective_var(t, energy, p, A, x, y));
}

double empirical_log_partition(const Energy& energy, const ParamVector& psi, const Matrix& y) {
  require_rows(y, "base");
  require_width(energy, y, "base");
  Tape t;
  auto p = t.bind(psi, false);
  return t.scalar(log_partition_var(t, energy, p, y));
}

double amortized_A_update(double A, double A_tilde, double lr) {
  if (!(lr > 0.0)) throw ConfigError("A update learning rate must be positive");
  const double e = std::exp(A - A_tilde);
  if (!std::isfinite(e)) throw DomainError("exp(A - A~) overflowed in the A update");
  return A - lr * (e - 1.0);
}

double amortized_A_update(std::optional<double> A, const Matrix& y, const Energy& energy,
                          const ParamVector& psi, double lr) {
  const double a_tilde = empirical_log_partition(energy, psi, y);
  if (!A) return a_tilde;
  return amortized_A_update(*A, a_tilde, lr);
}

Matrix probe_batch(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) throw DimensionError("probe: data and base widths differ");
  const Eigen::Index k = std::min(x.rows(), y.rows());
  const Eigen::Index from_x = (k + 1) / 2;
  const Eigen::Index from_y = k - from_x;
  Matrix probe(k, x.cols());
  probe.topRows(from_x) = x.topRows(from_x);
  probe.bottomRows(from_y) = y.topRows(from_y);
  return probe;
}

double regularizer(const Energy& energy, const ParamVector& psi, const Matrix& probe,
                   const RegularizerConfig& config) {
  require_rows(probe, "probe");
  double total = 0.0;
  if (config.l2_enabled && psi.size() > 0)
    total += psi.values().squaredNorm() / static_cast<double>(psi.size());
  if (config.grad_penalty_enabled) {
    const Matrix g = models::energy_input_grad(energy, psi, probe);
    total += g.rowwise().squaredNorm().mean();
  }
  return total;
}

ParamVector regularizer_grad(const Energy& energy, const ParamVector& psi, const Matrix& probe,
                             const RegularizerConfig& config) {
  require_rows(probe, "probe");
  Vector grad = Vector::Zero(psi.size());
  if (config.l2_enabled && psi.size() > 0)
    grad += (2.0 / static_cast<double>(psi.size())) * psi.values();
  if (config.grad_penalty_enabled && psi.size() > 0) {
    const Matrix g = models::energy_input_grad(energy, psi, probe);
    const Vector norms = g.rowwise().norm();
    Matrix dir = Matrix::Zero(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      if (norms[i] > 0.0) dir.row(i) = g.row(i) / norms[i];
    const double h = config.fd_step;
    Tape t;
    auto p = t.bind(psi, true);
    Var up = energy.apply(t, p, t.constant(probe + h * dir));
    Var down = energy.apply(t, p, t.constant(probe - h * dir));
    Matrix weight = norms * (1.0 / (h * static_cast<double>(probe.rows())));
    Var root = ad::sum((up - down) * t.constant(weight));
    t.backward(root);
    grad += t.gradient(p).values();
  }
  return psi.with_values(std::move(grad));
}

EnergyLossGrad energy_loss_grad(const Energy& energy, const EnergyState& state, const Matrix& x,
                                const Matrix& y, const RegularizerConfig& reg) {
  require_rows(x, "data");
  require_rows(y, "base");
  require_width(energy, x, "data");
  require_width(energy, y, "base");
  EnergyLossGrad out;
  {
    Tape t;
    auto p = t.bind(state.psi, true);
    Var f = f_objective_var(t, energy, p, state.A, x, y);
    Var a_tilde = log_partition_var(t, energy, p, y);
    t.backward(f);
    out.objective = t.scalar(f);
    out.A_tilde = t.scalar(a_tilde);
    out.g_psi = t.gradient(p);
    out.g_psi = out.g_psi.with_values(-out.g_psi.values());
  }
  if (reg.weight != 0.0) {
    const ParamVector r = regularizer_grad(energy, state.psi, probe_batch(x, y), reg);
    out.g_psi = out.g_psi.with_values(out.g_psi.values() + reg.weight * r.values());
  }
  const double e = std::exp(state.A - out.A_tilde);
  if (!std::isfinite(e)) throw DomainError("exp(A - A~) overflowed");
  out.g_A = e - 1.0;
  return out;
}

BaseGradient base_gradient(const models::BaseModel& base, const Energy& energy,
                           const ParamVector& psi, const Matrix& z) {
  require_rows(z, "latent");
  if (z.cols() != base.latent_dim()) throw DimensionError("latent batch width mismatch");
  if (base.data_dim() != energy.input_dim())
    throw DimensionError("energy input dimension does not match the base output");
  Tape t;
  auto theta = t.bind(base.theta(), true);
  auto p = t.bind(psi, false);
  Var x = base.generator().apply(t, theta, t.constant(z));
  Var root = -ad::logsumexp(-energy.apply(t, p, x));
  t.backward(root);
  BaseGradient out;
  out.grad = t.gradient(theta);
  out.log_partition = -t.scalar(root) - std::log(static_cast<double>(z.rows()));
  return out;
}

void to_json(nlohmann::json& j, const RegularizerConfig& c) {
  j = {{"weight", c.weight},
       {"l2", c.l2_enabled},
       {"grad_penalty", c.grad_penalty_enabled},
       {"fd_step", c.fd_step}};
}

void from_json(const nlohmann::json& j, RegularizerConfig& c) {
  const std::string where = "regularizer";
  io::check_keys(j, {"weight", "l2", "grad_penalty", "fd_step"}, where);
  io::read_opt(j, "weight", c.weight, where);
  io::read_opt(j, "l2", c.l2_enabled, where);
  io::read_opt(j, "grad_penalty", c.grad_penalty_enabled, where);
  io::read_opt(j, "fd_step", c.fd_step, where);
  if (c.weight < 0.0) throw ConfigError("regularizer.weight must be >= 0");
  if (!(c.fd_step > 0.0)) throw ConfigError("regularizer.fd_step must be > 0");
}

void to_json(nlohmann::json& j, const KaleConfig& c) {
  j = {{"steps", c.steps},
       {"batch_x", c.batch_x},
       {"batch_y", c.batch_y},
       {"lr", c.lr},
       {"lr_A", c.lr_A},
       {"adam_betas", {c.adam.beta1, c.adam.beta2}},
       {"regularizer", c.reg},
       {"clip_norm", c.clip_norm},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, KaleConfig& c) {
  const std::string where = "kale";
  io::check_keys(j,
                 {"steps", "batch_x", "batch_y", "lr", "lr_A", "adam_betas", "regularizer",
                  "clip_norm", "seed"},
                 where);
  io::read_opt(j, "steps", c.steps, where);
  io::read_opt(j, "batch_x", c.batch_x, where);
  io::read_opt(j, "batch_y", c.batch_y, where);
  io::read_opt(j, "lr", c.lr, where);
  io::read_opt(j, "lr_A", c.lr_A, where);
  if (j.contains("adam_betas")) {
    std::vector<double> b;
    io::read_opt(j, "adam_betas", b, where);
    if (b.size() != 2) throw ConfigError("kale.adam_betas must have two entries");
    c.adam.beta1 = b[0];
    c.adam.beta2 = b[1];
  }
  if (j.contains("regularizer")) c.reg = j.at("regularizer").get<RegularizerConfig>();
  io::read_opt(j, "clip_norm", c.clip_norm, where);
  io::read_opt(j, "seed", c.seed, where);
  if (c.steps < 0) throw ConfigError("kale.steps must be >= 0");
  if (c.batch_x < 1 || c.batch_y < 1) throw ConfigError("kale batch sizes must be >= 1");
  if (!(c.lr > 0.0)) throw ConfigError("kale.lr must be > 0");
  if (!(c.lr_A > 0.0)) throw ConfigError("kale.lr_A must be > 0");
}

KaleEstimate kale(const Matrix& x, const Matrix& y, const models::EnergyPtr& energy,
                  const KaleConfig& config, std::optional<ParamVector> init) {
  require_rows(x, "data");
  require_rows(y, "base");
  require_width(*energy, x, "data");
  require_width(*energy, y, "base");
  KaleEstimate est;
  est.config = config;
  est.family = energy->family();
  EnergyState state{init ? *init : energy->init_params(), 0.0};
  training::AdamMoments moments = training::AdamMoments::zeros(state.psi.size());
  Rng rng(config.seed, 0);
  bool have_A = false;
  for (int step = 0; step < config.steps; ++step) {
    const Matrix xb = minibatch(x, config.batch_x, rng);
    const Matrix yb = minibatch(y, config.batch_y, rng);
    try {
      if (!have_A) {
        state.A = empirical_log_partition(*energy, state.psi, yb);
        have_A = true;
      }
      const EnergyLossGrad g = energy_loss_grad(*energy, state, xb, yb, config.reg);
      if (!std::isfinite(g.objective) || !g.g_psi.values().allFinite())
        throw DomainError("non-finite objective or gradient");
      est.trace.push_back({step, g.objective, state.A, g.A_tilde});
      auto upd = training::adam_step(state.psi, training::clip_by_norm(g.g_psi, config.clip_norm),
                                     moments, config.lr, config.adam);
      state.psi = std::move(upd.params);
      moments = std::move(upd.moments);
      state.A = amortized_A_update(state.A, g.A_tilde, config.lr_A);
    } catch (const DomainError& e) {
      throw DivergenceError("kale diverged at step " + std::to_string(step) + ": " + e.what(), step);
    }
  }
  state.A = empirical_log_partition(*energy, state.psi, y);
  est.value = f_objective(*energy, state.psi, state.A, x, y);
  if (!std::isfinite(est.value)) throw DivergenceError("kale value is not finite", config.steps);
  est.state = std::move(state);
  return est;
}

nlohmann::json to_json(const KaleEstimate& e) {
  return {{"value", e.value},
          {"family", e.family},
          {"steps", e.config.steps},
          {"A", e.state.A},
          {"config", e.config}};
}

void write_trace_csv(const std::filesystem::path& path, const KaleEstimate& e) {
  std::vector<std::vector<double>> rows;
  rows.reserve(e.trace.size());
  for (const auto& r : e.trace) rows.push_back({static_cast<double>(r.step), r.objective, r.A, r.A_tilde});
  io::write_series_csv(path, {"step", "objective", "A", "A_tilde"}, rows);
}

}  // namespace gebm::kale

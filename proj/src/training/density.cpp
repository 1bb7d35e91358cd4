#include "gebm/training/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "gebm/error.hpp"
#include "gebm/io/json_util.hpp"
#include "gebm/kale/kale.hpp"
#include "gebm/random.hpp"

namespace gebm::training {

namespace {

void require_density(const models::BaseModel& base) {
  if (!base.has_density()) throw ConfigError("base model has no tractable density (need a flow)");
}

}  // namespace

void DensityConfig::validate() const {
  if (steps < 0) throw ConfigError("density.steps must be >= 0");
  if (batch < 1) throw ConfigError("density.batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("density.lr must be > 0");
  if (eval_every < 1) throw ConfigError("density.eval_every must be >= 1");
  if (langevin_steps < 0) throw ConfigError("density.langevin_steps must be >= 0");
  if (!(langevin_step_size >= 0.0)) throw ConfigError("density.langevin_step_size must be >= 0");
}

void to_json(nlohmann::json& j, const DensityConfig& c) {
  j = {{"steps", c.steps},
       {"batch", c.batch},
       {"lr", c.lr},
       {"adam_betas", {c.adam.beta1, c.adam.beta2}},
       {"clip_norm", c.clip_norm},
       {"seed", c.seed},
       {"eval_every", c.eval_every},
       {"langevin_steps", c.langevin_steps},
       {"langevin_step_size", c.langevin_step_size}};
}

void from_json(const nlohmann::json& j, DensityConfig& c) {
  const std::string where = "density";
  io::check_keys(j,
                 {"steps", "batch", "lr", "adam_betas", "clip_norm", "seed", "eval_every",
                  "langevin_steps", "langevin_step_size"},
                 where);
  io::read_opt(j, "steps", c.steps, where);
  io::read_opt(j, "batch", c.batch, where);
  io::read_opt(j, "lr", c.lr, where);
  if (j.contains("adam_betas")) {
    std::vector<double> b;
    io::read_opt(j, "adam_betas", b, where);
    if (b.size() != 2) throw ConfigError("density.adam_betas must have two entries");
    c.adam.beta1 = b[0];
    c.adam.beta2 = b[1];
  }
  io::read_opt(j, "clip_norm", c.clip_norm, where);
  io::read_opt(j, "seed", c.seed, where);
  io::read_opt(j, "eval_every", c.eval_every, where);
  io::read_opt(j, "langevin_steps", c.langevin_steps, where);
  io::read_opt(j, "langevin_step_size", c.langevin_step_size, where);
  c.validate();
}

double flow_nll(const models::BaseModel& flow_base, const Matrix& x) {
  require_density(flow_base);
  return flow_base.neg_log_density(x).mean();
}

DensityTrainResult train_flow_ml(const Matrix& data, const models::BaseModel& flow_base,
                                 const DensityConfig& config) {
  config.validate();
  require_density(flow_base);
  if (data.rows() < 1) throw ConfigError("training data is empty");
  DensityTrainResult out{flow_base.theta(), {}};
  AdamMoments moments = AdamMoments::zeros(out.params.size());
  Rng rng(config.seed, 0);
  const auto& gen = flow_base.generator();
  for (int step = 0; step < config.steps; ++step) {
    const Matrix xb = kale::minibatch(data, config.batch, rng);
    ad::Tape tape;
    auto p = tape.bind(out.params);
    ad::Var loss = ad::mean(gen.neg_log_density(tape, p, tape.constant(xb)));
    tape.backward(loss);
    const ad::ParamVector g = tape.gradient(p);
    if (!std::isfinite(tape.scalar(loss)) || !g.values().allFinite())
      throw DivergenceError("flow ML diverged at step " + std::to_string(step), step);
    auto upd = adam_step(out.params, clip_by_norm(g, config.clip_norm), moments, config.lr, config.adam);
    out.params = std::move(upd.params);
    moments = std::move(upd.moments);
    if ((step + 1) % config.eval_every == 0)
      out.history.emplace_back(step + 1, flow_nll(flow_base.with_params(out.params), data));
  }
  return out;
}

Matrix langevin_negatives(const models::Energy& h, const ad::ParamVector& psi, Matrix x, int steps,
                          double step_size, Rng& rng) {
  const double noise = std::sqrt(2.0 * step_size);
  for (int t = 0; t < steps; ++t) {
    const Matrix g = models::energy_input_grad(h, psi, x);
    x += -step_size * g + noise * rng.normal_matrix(x.rows(), x.cols());
    if (!x.allFinite()) throw DivergenceError("CD Langevin chain diverged at step " + std::to_string(t), t);
  }
  return x;
}

ad::ParamVector cd_gradient(const models::Energy& h, const ad::ParamVector& psi,
                            const Matrix& positives, const Matrix& negatives) {
  ad::Tape tape;
  auto p = tape.bind(psi);
  ad::Var pos = ad::mean(h.apply(tape, p, tape.constant(positives)));
  ad::Var neg = ad::mean(h.apply(tape, p, tape.constant(negatives)));
  tape.backward(pos - neg);
  return tape.gradient(p);
}

DensityTrainResult train_ebm_cd(const Matrix& data, const models::EnergyPtr& h,
                                const ad::ParamVector& init, const DensityConfig& config) {
  config.validate();
  if (data.rows() < 1) throw ConfigError("training data is empty");
  DensityTrainResult out{init, {}};
  AdamMoments moments = AdamMoments::zeros(init.size());
  Rng rng(config.seed, 0);
  for (int step = 0; step < config.steps; ++step) {
    const Matrix xb = kale::minibatch(data, config.batch, rng);
    const Matrix neg = langevin_negatives(*h, out.params, xb, config.langevin_steps,
                                          config.langevin_step_size, rng);
    const ad::ParamVector g = cd_gradient(*h, out.params, xb, neg);
    if (!g.values().allFinite())
      throw DivergenceError("CD diverged at step " + std::to_string(step), step);
    auto upd = adam_step(out.params, clip_by_norm(g, config.clip_norm), moments, config.lr, config.adam);
    out.params = std::move(upd.params);
    moments = std::move(upd.moments);
    if ((step + 1) % config.eval_every == 0)
      out.history.emplace_back(step + 1, models::energy_eval(*h, out.params, data).mean());
  }
  return out;
}

double mc_log_partition(const models::BaseModel& base, const models::Energy& energy,
                        const ad::ParamVector& psi, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("Monte Carlo sample size must be >= 1");
  constexpr Eigen::Index chunk = 8192;
  Rng rng(seed, 0x6d63);
  double hi = -std::numeric_limits<double>::infinity(), acc = 0.0;
  for (Eigen::Index done = 0; done < n; done += chunk) {
    const Eigen::Index m = std::min(chunk, n - done);
    const Vector e = models::energy_eval(energy, psi, base.generate(base.prior().sample(m, rng)));
    const double chunk_hi = (-e).maxCoeff();
    if (chunk_hi > hi) {
      acc *= std::exp(hi - chunk_hi);
      hi = chunk_hi;
    }
    acc += (-e.array() - hi).exp().sum();
  }
  return hi + std::log(acc / static_cast<double>(n));
}

double eval_nll_gebm(const models::BaseModel& flow_base, const models::Energy& energy,
                     const ad::ParamVector& psi, const Matrix& test, Eigen::Index mc_samples,
                     std::uint64_t seed) {
  require_density(flow_base);
  if (test.rows() < 1) throw ConfigError("test data is empty");
  const double a_true = mc_log_partition(flow_base, energy, psi, mc_samples, seed);
  const Vector e = models::energy_eval(energy, psi, test);
  const Vector r = flow_base.neg_log_density(test);
  return (e + r).mean() + a_true;
}

}  // namespace gebm::training

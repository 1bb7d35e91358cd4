#include "gebm/training/train.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gebm/error.hpp"
#include "gebm/io/csv.hpp"
#include "gebm/io/json_util.hpp"
#include "gebm/random.hpp"

namespace gebm::training {

namespace {

constexpr std::uint64_t kBaseTag = 0xba5e0000000ull;
constexpr std::uint64_t kValTag = 0x7a1000000000ull;

Rng step_rng(std::uint64_t seed, long k, std::uint64_t j) {
  return Rng(seed, derive_stream(seed, {static_cast<std::uint64_t>(k), j}));
}

models::EnergyPtr rebase(const models::EnergyPtr& energy, const ad::ParamVector& theta) {
  auto r = energy->rebased(theta);
  return r ? r : energy;
}

bool finite(const ad::ParamVector& p) { return p.values().allFinite(); }

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

ad::ParamVector load_component(const std::filesystem::path& dir,
                               const std::shared_ptr<const ad::ParamLayout>& layout) {
  ad::ParamVector p = ad::load_params(dir);
  if (!(p.layout() == *layout))
    throw ParseError(dir.string() + ": parameter layout does not match the model descriptor");
  return ad::ParamVector(layout, p.values());
}

}  // namespace

void TrainConfig::validate() const {
  if (base_steps < 0) throw ConfigError("train.base_steps must be >= 0");
  if (energy_steps < 1) throw ConfigError("train.energy_steps must be >= 1");
  if (burst_steps < 0) throw ConfigError("train.burst_steps must be >= 0");
  if (batch_data < 1 || batch_base < 1) throw ConfigError("train batch sizes must be >= 1");
  if (!(lr_energy > 0.0) || !(lr_base > 0.0)) throw ConfigError("train learning rates must be > 0");
  if (!(lr_A > 0.0)) throw ConfigError("train.lr_A must be > 0");
  if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
  if (val_base_samples < 1) throw ConfigError("train.val_base_samples must be >= 1");
  if (scheduler_patience < 1) throw ConfigError("train.scheduler_patience must be >= 1");
  if (!(scheduler_factor > 0.0 && scheduler_factor <= 1.0))
    throw ConfigError("train.scheduler_factor must be in (0, 1]");
}

int TrainConfig::energy_steps_at(long k) const {
  const bool burst = k == 0 || (burst_every > 0 && k % burst_every == 0);
  return energy_steps + (burst ? burst_steps : 0);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"base_steps", c.base_steps},
       {"energy_steps", c.energy_steps},
       {"burst_steps", c.burst_steps},
       {"burst_every", c.burst_every},
       {"batch_data", c.batch_data},
       {"batch_base", c.batch_base},
       {"lr_energy", c.lr_energy},
       {"lr_base", c.lr_base},
       {"lr_A", c.lr_A},
       {"adam_betas", {c.adam.beta1, c.adam.beta2}},
       {"regularizer", c.reg},
       {"clip_norm", c.clip_norm},
       {"seed", c.seed},
       {"eval_every", c.eval_every},
       {"val_base_samples", c.val_base_samples},
       {"scheduler_patience", c.scheduler_patience},
       {"scheduler_factor", c.scheduler_factor}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const std::string where = "train";
  io::check_keys(j,
                 {"base_steps", "energy_steps", "burst_steps", "burst_every", "batch_data",
                  "batch_base", "lr_energy", "lr_base", "lr_A", "adam_betas", "regularizer",
                  "clip_norm", "seed", "eval_every", "val_base_samples", "scheduler_patience",
                  "scheduler_factor"},
                 where);
  io::read_opt(j, "base_steps", c.base_steps, where);
  io::read_opt(j, "energy_steps", c.energy_steps, where);
  io::read_opt(j, "burst_steps", c.burst_steps, where);
  io::read_opt(j, "burst_every", c.burst_every, where);
  io::read_opt(j, "batch_data", c.batch_data, where);
  io::read_opt(j, "batch_base", c.batch_base, where);
  io::read_opt(j, "lr_energy", c.lr_energy, where);
  io::read_opt(j, "lr_base", c.lr_base, where);
  io::read_opt(j, "lr_A", c.lr_A, where);
  if (j.contains("adam_betas")) {
    std::vector<double> b;
    io::read_opt(j, "adam_betas", b, where);
    if (b.size() != 2) throw ConfigError("train.adam_betas must have two entries");
    c.adam.beta1 = b[0];
    c.adam.beta2 = b[1];
  }
  if (j.contains("regularizer")) c.reg = j.at("regularizer").get<kale::RegularizerConfig>();
  io::read_opt(j, "clip_norm", c.clip_norm, where);
  io::read_opt(j, "seed", c.seed, where);
  io::read_opt(j, "eval_every", c.eval_every, where);
  io::read_opt(j, "val_base_samples", c.val_base_samples, where);
  io::read_opt(j, "scheduler_patience", c.scheduler_patience, where);
  io::read_opt(j, "scheduler_factor", c.scheduler_factor, where);
  c.validate();
}

TrainState initial_state(const models::BaseModel& base, const ad::ParamVector& psi,
                         const TrainConfig& config) {
  TrainState s;
  s.theta = base.theta();
  s.psi = psi;
  s.base_moments = AdamMoments::zeros(s.theta.size());
  s.energy_moments = AdamMoments::zeros(s.psi.size());
  s.scheduler.lr_energy = config.lr_energy;
  s.scheduler.lr_base = config.lr_base;
  s.scheduler.patience = config.scheduler_patience;
  s.scheduler.factor = config.scheduler_factor;
  return s;
}

double validation_kale(const GebmModel& model, const ad::ParamVector& psi, const Matrix& val,
                       Eigen::Index base_samples, std::uint64_t seed) {
  const Matrix y = model.base.sample(base_samples, seed).x;
  return kale::dv_estimate(*model.energy, psi, val, y);
}

TrainResult train_gebm(const Matrix& data, const Matrix& val, const models::BaseModel& base,
                       const models::EnergyPtr& energy, TrainState state,
                       const TrainConfig& config, const TrainObserver& observer) {
  config.validate();
  if (data.rows() < 1) throw ConfigError("training data is empty");
  if (val.rows() < 1) throw ConfigError("validation data is empty");
  if (data.cols() != base.data_dim() || val.cols() != base.data_dim())
    throw DimensionError("data width does not match the base output dimension");
  if (energy->input_dim() != base.data_dim())
    throw DimensionError("energy input dimension does not match the base output dimension");
  if (state.theta.size() != base.theta().size() || state.psi.size() != energy->init_params().size())
    throw DimensionError("training state does not match the models");

  GebmModel model{base.with_params(state.theta), rebase(energy, state.theta)};
  double last_objective = 0.0, last_A_tilde = 0.0;

  for (long k = state.base_step; k < config.base_steps; ++k) {
    const TrainState snapshot = state;
    auto diverged = [&](const std::string& what) {
      throw TrainDiverged("training diverged at base step " + std::to_string(k) + ": " + what, k,
                          snapshot);
    };
    try {
      const int n_energy = config.energy_steps_at(k);
      for (int j = 0; j < n_energy; ++j) {
        Rng rng = step_rng(config.seed, k, static_cast<std::uint64_t>(j));
        const Matrix xb = kale::minibatch(data, config.batch_data, rng);
        const Matrix yb = model.base.generate(model.base.prior().sample(config.batch_base, rng));
        if (!state.A_initialized) {
          state.A = kale::empirical_log_partition(*model.energy, state.psi, yb);
          state.A_initialized = true;
        }
        const kale::EnergyLossGrad g =
            kale::energy_loss_grad(*model.energy, {state.psi, state.A}, xb, yb, config.reg);
        if (!std::isfinite(g.objective) || !finite(g.g_psi)) diverged("non-finite energy loss");
        auto upd = adam_step(state.psi, clip_by_norm(g.g_psi, config.clip_norm),
                             state.energy_moments, state.scheduler.lr_energy, config.adam);
        state.psi = std::move(upd.params);
        state.energy_moments = std::move(upd.moments);
        state.A = kale::amortized_A_update(state.A, g.A_tilde, config.lr_A);
        ++state.energy_step;
        last_objective = g.objective;
        last_A_tilde = g.A_tilde;
      }

      Rng rng = step_rng(config.seed, k, kBaseTag);
      const Matrix z = model.base.prior().sample(config.batch_base, rng);
      const kale::BaseGradient bg = kale::base_gradient(model.base, *model.energy, state.psi, z);
      if (!finite(bg.grad)) diverged("non-finite base gradient");
      auto upd = adam_step(state.theta, clip_by_norm(bg.grad, config.clip_norm), state.base_moments,
                           state.scheduler.lr_base, config.adam);
      state.theta = std::move(upd.params);
      state.base_moments = std::move(upd.moments);
      state.base_step = k + 1;
      model.base = model.base.with_params(state.theta);
      model.energy = rebase(model.energy, state.theta);
      if (!finite(state.theta) || !finite(state.psi) || !std::isfinite(state.A))
        diverged("non-finite parameters");

      if (state.base_step % config.eval_every == 0) {
        const std::uint64_t vs = derive_stream(config.seed, {static_cast<std::uint64_t>(k), kValTag});
        const double vk = validation_kale(model, state.psi, val, config.val_base_samples, vs);
        if (!std::isfinite(vk)) diverged("non-finite validation KALE");
        state.history.push_back({state.base_step, last_objective, state.A, last_A_tilde, vk,
                                 state.scheduler.lr_energy});
        state.scheduler = lr_scheduler_step(state.scheduler, vk);
      }
    } catch (const DomainError& e) {
      diverged(e.what());
    }
    if (observer) observer(state, model);
  }
  return {std::move(state), std::move(model)};
}

void save_checkpoint(const std::filesystem::path& dir, const GebmModel& model,
                     const TrainState& state, const TrainConfig& config) {
  std::filesystem::create_directories(dir);
  nlohmann::json models_json = {{"base", models::base_descriptor(model.base)},
                                {"energy", model.energy->descriptor()}};
  io::write_text(dir / "models.json", models_json.dump(2) + "\n");
  ad::save_params(state.theta, dir / "base");
  ad::save_params(state.psi, dir / "energy");
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : state.history)
    history.push_back({r.step, r.objective, r.A, r.A_tilde, r.val_kale, r.lr});
  nlohmann::json ts = {{"A", state.A},
                       {"A_initialized", state.A_initialized},
                       {"base_moments", state.base_moments},
                       {"energy_moments", state.energy_moments},
                       {"base_step", state.base_step},
                       {"energy_step", state.energy_step},
                       {"scheduler", state.scheduler},
                       {"history", history},
                       {"config", config}};
  io::write_text(dir / "trainstate.json", ts.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ParseError("checkpoint directory not found: " + dir.string());
  const nlohmann::json mj = read_json(dir / "models.json");
  const nlohmann::json tj = read_json(dir / "trainstate.json");
  try {
    auto prior = mj.at("base").at("prior").get<models::GaussianPrior>();
    auto generator = models::make_generator(mj.at("base").at("generator"));
    ad::ParamVector theta = load_component(dir / "base", generator->layout());
    models::BaseModel base(prior, generator, theta);
    models::EnergyPtr energy = models::make_energy(mj.at("energy"), &theta);
    Checkpoint c{{base, energy}, {}, tj.at("config").get<TrainConfig>()};
    TrainState& s = c.state;
    s.theta = theta;
    s.psi = load_component(dir / "energy", energy->layout());
    s.A = tj.at("A").get<double>();
    s.A_initialized = tj.at("A_initialized").get<bool>();
    s.base_moments = tj.at("base_moments").get<AdamMoments>();
    s.energy_moments = tj.at("energy_moments").get<AdamMoments>();
    s.base_step = tj.at("base_step").get<long>();
    s.energy_step = tj.at("energy_step").get<long>();
    s.scheduler = tj.at("scheduler").get<SchedulerState>();
    for (const auto& r : tj.at("history")) {
      auto v = r.get<std::vector<double>>();
      if (v.size() != 6) throw ParseError("trainstate.json: history rows need 6 entries");
      s.history.push_back({static_cast<long>(v[0]), v[1], v[2], v[3], v[4], v[5]});
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(dir.string() + ": malformed checkpoint: " + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(dir.string() + ": malformed checkpoint: " + e.what());
  }
}

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows)
    out.push_back({static_cast<double>(r.step), r.objective, r.A, r.A_tilde, r.val_kale, r.lr});
  io::write_series_csv(path, {"step", "objective", "A", "A_tilde", "val_kale", "lr"}, out);
}

}  // namespace gebm::training

#include "gebm/bench/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>

#include "gebm/bench/datasets.hpp"
#include "gebm/bench/metrics.hpp"
#include "gebm/error.hpp"
#include "gebm/io/csv.hpp"
#include "gebm/io/json_util.hpp"
#include "gebm/kale/kale.hpp"
#include "gebm/random.hpp"
#include "gebm/rkhs/rkhs_kale.hpp"
#include "gebm/samplers/langevin.hpp"
#include "gebm/training/density.hpp"
#include "gebm/training/train.hpp"

namespace gebm::bench {

using ad::Matrix;
using ad::Vector;
using models::Activation;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string num(double v) { return io::format_double(v); }

Activation activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  throw ConfigError("unknown activation '" + name + "' (expected tanh or leaky_relu)");
}

/// Reads experiment keys with defaults and records the effective values.
class Ctx {
 public:
  Ctx(std::string name, const json& user, std::vector<std::string> keys,
      const std::filesystem::path& out_root, BenchResult& result)
      : name_(std::move(name)), user_(user), result_(result) {
    if (!user_.is_object()) throw ConfigError(name_ + ": config must be a JSON object");
    keys.push_back("seeds");
    for (const auto& item : user_.items())
      if (std::find(keys.begin(), keys.end(), item.key()) == keys.end())
        throw ConfigError(name_ + ": unknown key '" + item.key() + "'");
    if (!out_root.empty()) dir_ = out_root / name_;
    result_.experiment = name_;
  }

  template <class T>
  T get(const char* key, T def) {
    io::read_opt(user_, key, def, name_);
    echo_[key] = def;
    return def;
  }

  /// Library config structs: experiment defaults overlaid with user keys.
  template <class T>
  T nested(const char* key, const T& def) {
    json j = def;
    if (user_.contains(key)) {
      if (!user_.at(key).is_object()) throw ConfigError(name_ + ": '" + key + "' must be an object");
      for (const auto& item : user_.at(key).items()) j[item.key()] = item.value();
    }
    T out = j.get<T>();
    echo_[key] = out;
    return out;
  }

  std::vector<std::uint64_t> seeds(std::vector<std::uint64_t> def) {
    auto s = get("seeds", def);
    if (s.empty()) throw ConfigError(name_ + ": seeds must not be empty");
    return s;
  }

  void begin_seed() { t0_ = Clock::now(); }

  void report(const std::string& metric, std::optional<std::uint64_t> seed, double value,
              double std_error = 0.0) {
    const double t = std::chrono::duration<double>(Clock::now() - t0_).count();
    result_.reports.push_back({metric, seed, value, std_error, json{}, seed ? t : 0.0});
  }

  void check(const std::string& name, bool passed, const std::string& detail) {
    result_.assertions.push_back({name, passed, detail});
  }

  bool writing() const { return !dir_.empty(); }
  std::filesystem::path seed_dir(std::uint64_t seed) const { return dir_ / std::to_string(seed); }
  const std::filesystem::path& dir() const { return dir_; }

  void write_matrix(std::uint64_t seed, const std::string& file, const Matrix& m) const {
    if (writing()) io::write_matrix_csv(seed_dir(seed) / file, m);
  }
  void write_series(std::uint64_t seed, const std::string& file, const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& rows) const {
    if (writing()) io::write_series_csv(seed_dir(seed) / file, header, rows);
  }

  json finish() {
    result_.config = echo_;
    for (auto& r : result_.reports) r.config = echo_;
    return echo_;
  }

 private:
  std::string name_;
  json user_;
  json echo_ = json::object();
  BenchResult& result_;
  std::filesystem::path dir_;
  Clock::time_point t0_ = Clock::now();
};

Matrix normal_rows(Eigen::Index n, Eigen::Index d, double shift, std::uint64_t seed,
                   std::uint64_t tag) {
  Matrix x = Rng(seed, derive_stream(seed, {tag})).normal_matrix(n, d);
  return (x.array() + shift).matrix();
}

std::vector<std::uint64_t> range_seeds(int n) {
  std::vector<std::uint64_t> s(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
  return s;
}

// --- kale-gaussian ---------------------------------------------------------

void kale_gaussian(Ctx& c) {
  const auto seeds = c.seeds(range_seeds(5));
  const auto n = c.get<Eigen::Index>("n", 2000);
  const double shift = c.get("shift", 1.0);
  const double null_tol = c.get("null_tolerance", 0.05);
  const double min_value = c.get("min_value", 0.3);
  const auto hidden = c.get<std::vector<int>>("hidden", {32, 32});
  kale::KaleConfig def;
  def.steps = 1500;
  def.lr = 2e-3;
  def.reg.weight = 0.1;
  kale::KaleConfig kc = c.nested("kale", def);
  const double kl = gaussian_kl(0.0, 1.0, shift, 1.0);
  for (auto seed : seeds) {
    c.begin_seed();
    const Matrix x = normal_rows(n, 1, 0.0, seed, 1);
    const Matrix y_null = normal_rows(n, 1, 0.0, seed, 2);
    const Matrix y = normal_rows(n, 1, shift, seed, 3);
    auto energy = std::make_shared<models::MlpEnergy>(models::MlpSpec{1, hidden, 1, Activation::Tanh, seed});
    kc.seed = seed;
    const auto null = kale::kale(x, y_null, energy, kc);
    const auto est = kale::kale(x, y, energy, kc);
    const double se_null = kale::dv_stderr(*energy, null.state.psi, x, y_null);
    const double se = kale::dv_stderr(*energy, est.state.psi, x, y);
    c.report("kale_null", seed, null.value, se_null);
    c.report("kale", seed, est.value, se);
    c.report("kl_true", seed, kl);
    if (c.writing()) kale::write_trace_csv(c.seed_dir(seed) / "trace.csv", est);
    const std::string s = " (seed " + std::to_string(seed) + ")";
    c.check("null |KALE| <= " + num(null_tol) + s, std::abs(null.value) <= null_tol,
            "value " + num(null.value));
    c.check("0 < KALE <= KL + 3 stderr" + s, est.value > 0.0 && est.value <= kl + 3.0 * se,
            "value " + num(est.value) + ", KL " + num(kl) + ", stderr " + num(se));
    c.check("KALE >= " + num(min_value) + s, est.value >= min_value, "value " + num(est.value));
  }
}

// --- amortized-vs-batch ----------------------------------------------------

void amortized_vs_batch(Ctx& c) {
  const auto seeds = c.seeds(range_seeds(25));
  const auto batch = c.get<Eigen::Index>("batch", 100);
  const int updates = c.get("updates", 2000);
  const double lr_A = c.get("lr_A", 0.01);
  const auto mc = c.get<Eigen::Index>("mc_samples", 10000000);
  const auto hidden = c.get<std::vector<int>>("energy_hidden", {16});
  const auto energy_seed = c.get<std::uint64_t>("energy_seed", 2024);
  const double bias = c.get("energy_bias", 1.0);
  const double min_ratio = c.get("min_ratio", 5.0);
  if (batch < 1 || updates < 1) throw ConfigError("amortized-vs-batch: batch and updates must be >= 1");

  auto gen = std::make_shared<models::IdentityGenerator>(2);
  const models::BaseModel base(models::GaussianPrior(2), gen, gen->init_params());
  auto energy = std::make_shared<models::MlpEnergy>(models::MlpSpec{2, hidden, 1, Activation::Tanh, energy_seed});
  ad::ParamVector psi = energy->init_params();
  const std::string out_bias = "energy.l" + std::to_string(hidden.size()) + ".b";
  psi = psi.with_block(out_bias, psi.block(out_bias).array() + bias);
  const double a_true = training::mc_log_partition(base, *energy, psi, mc, 0x74727565);

  std::vector<double> amortized, per_batch;
  for (auto seed : seeds) {
    c.begin_seed();
    Rng rng(seed, derive_stream(seed, {0x616d6f72}));
    double A = 0.0;
    std::vector<double> errs;
    std::vector<std::vector<double>> series;
    for (int b = 0; b < updates; ++b) {
      const Matrix y = base.prior().sample(batch, rng);
      const double a_batch = kale::empirical_log_partition(*energy, psi, y);
      errs.push_back(std::abs(a_batch - a_true) / std::abs(a_true));
      A = b == 0 ? a_batch : kale::amortized_A_update(A, a_batch, lr_A);
      series.push_back({static_cast<double>(b + 1), A, a_batch});
    }
    const double amort = std::abs(A - a_true) / std::abs(a_true);
    const double batch_err = median(errs);
    amortized.push_back(amort);
    per_batch.push_back(batch_err);
    c.report("amortized_rel_error", seed, amort);
    c.report("batch_rel_error_median", seed, batch_err);
    c.report("A_true", seed, a_true);
    c.write_series(seed, "trajectory.csv", {"update", "A", "A_tilde"}, series);
  }
  const double ma = median(amortized), mb = median(per_batch);
  c.report("amortized_rel_error_seed_median", std::nullopt, ma);
  c.report("batch_rel_error_seed_median", std::nullopt, mb);
  c.check("amortized error at least " + num(min_ratio) + "x below per-batch error",
          ma * min_ratio <= mb, "amortized " + num(ma) + ", per-batch " + num(mb) + ", ratio " + num(mb / ma));
}

// --- sampler-moments -------------------------------------------------------

samplers::Gebm quadratic_gebm(int dim, double a, double b) {
  auto gen = std::make_shared<models::IdentityGenerator>(dim);
  models::BaseModel base(models::GaussianPrior(dim), gen, gen->init_params());
  auto e = std::make_shared<models::QuadraticEnergy>(dim);
  return {base, e, e->make_params(Vector::Constant(dim, a), Vector::Constant(dim, b), 0.0), 0.0, 1.0};
}

void sampler_moments(Ctx& c) {
  const auto seeds = c.seeds({0});
  const int dim = c.get("dim", 2);
  const auto chains = c.get<Eigen::Index>("chains", 1000);
  const int steps = c.get("steps", 100000);
  const double step_size = c.get("step_size", 1e-3);
  const double gamma = c.get("gamma", 100.0);
  const double u = c.get("u", 1.0);
  const int every = c.get("snapshot_every", 1000);
  const double tail = c.get("tail_fraction", 0.1);
  const double tol = c.get("tolerance", 0.05);
  if (every < 1 || !(tail > 0.0 && tail <= 1.0)) throw ConfigError("sampler-moments: bad snapshot settings");
  // E(x) = |x|^2 / 2 under a standard prior: nu = N(0, I/2).
  const auto g = quadratic_gebm(dim, 0.5, 0.0);
  const double target = 0.5;
  const int from = static_cast<int>(std::floor(steps * (1.0 - tail)));
  for (auto seed : seeds) {
    for (auto kind : {samplers::SamplerKind::Ula, samplers::SamplerKind::Kla}) {
      c.begin_seed();
      samplers::SamplerConfig sc;
      sc.kind = kind;
      sc.step_size = step_size;
      sc.gamma = gamma;
      sc.u = u;
      sc.num_steps = steps;
      sc.decay_every = 0;
      Matrix sum = Matrix::Zero(dim, dim);
      Vector mean_sum = Vector::Zero(dim);
      long count = 0;
      auto observe = [&](int step, const Matrix& z, const Matrix&) {
        if (step > from && step % every == 0) {
          sum += z.transpose() * z;
          mean_sum += z.colwise().sum().transpose();
          count += z.rows();
        }
      };
      if (kind == samplers::SamplerKind::Ula)
        samplers::ula_chain(g, sc, chains, seed, observe);
      else
        samplers::kla_chain(g, sc, chains, seed, observe);
      if (count < 2) throw ConfigError("sampler-moments: no snapshots in the pooled window");
      const Vector mean = mean_sum / static_cast<double>(count);
      const Matrix cov = (sum - static_cast<double>(count) * mean * mean.transpose()) /
                         static_cast<double>(count - 1);
      const std::string k = samplers::to_string(kind);
      double worst = 0.0;
      for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) {
          c.report(k + "_cov_" + std::to_string(i) + std::to_string(j), seed, cov(i, j));
          worst = std::max(worst, std::abs(cov(i, j) - (i == j ? target : 0.0)));
        }
      c.check(k + " pooled covariance within " + num(tol) + " of 0.5 I (seed " + std::to_string(seed) + ")",
              worst <= tol, "max deviation " + num(worst));
    }
  }
}

// --- w1-decay --------------------------------------------------------------

void w1_decay(Ctx& c) {
  const auto seeds = c.seeds(range_seeds(5));
  const auto chains = c.get<Eigen::Index>("chains", 10000);
  const int steps = c.get("steps", 2000);
  const int every = c.get("checkpoint_every", 100);
  const double step_size = c.get("step_size", 1e-2);
  const double gamma = c.get("gamma", 2.0);
  const double u = c.get("u", 1.0);
  const auto exact_n = c.get<Eigen::Index>("exact_samples", 1000000);
  const double a = c.get("a", 0.5);
  const double b = c.get("b", -2.0);
  if (every < 1 || steps < 10 || steps % 10 != 0 || (steps / 10) % every != 0 || steps % every != 0)
    throw ConfigError("w1-decay: steps/10 and steps must be multiples of checkpoint_every");
  // log nu(z) = -z^2/2 - a z^2 - b z + const.
  const double precision = 1.0 + 2.0 * a;
  if (!(precision > 0.0)) throw ConfigError("w1-decay: 1 + 2a must be > 0");
  const double mean = -b / precision, sd = 1.0 / std::sqrt(precision);
  const auto g = quadratic_gebm(1, a, b);
  std::vector<int> checkpoints;
  for (int t = 0; t <= steps; t += every) checkpoints.push_back(t);
  std::vector<double> tenth, final_;
  for (auto seed : seeds) {
    c.begin_seed();
    auto exact = [&](Eigen::Index n, std::uint64_t tag) {
      return Vector((Rng(seed, derive_stream(seed, {0x65786163, tag})).normal_matrix(n, 1).array() * sd + mean)
                        .matrix()
                        .col(0));
    };
    const Vector reference = exact(exact_n, 1);
    samplers::SamplerConfig sc;
    sc.step_size = step_size;
    sc.gamma = gamma;
    sc.u = u;
    sc.decay_every = 0;
    const auto series = samplers::w1_decay_diagnostic(g, sc, checkpoints, chains, reference, seed);
    std::vector<std::vector<double>> rows;
    double w10 = 0.0;
    for (const auto& [t, w] : series) {
      rows.push_back({static_cast<double>(t), w});
      if (t == steps / 10) w10 = w;
    }
    const double w0 = series.front().second, wf = series.back().second;
    const double floor = w1_1d(exact(chains, 2), reference);
    const double twin = w1_1d(exact(chains, 3), reference);
    tenth.push_back(w10);
    final_.push_back(wf);
    c.report("w1_initial", seed, w0);
    c.report("w1_tenth", seed, w10);
    c.report("w1_final", seed, wf);
    c.report("w1_exact_floor", seed, floor);
    c.write_series(seed, "w1.csv", {"step", "w1"}, rows);
    const std::string s = " (seed " + std::to_string(seed) + ")";
    c.check("W1 at t=0 is positive" + s, w0 > 0.0, "w1 " + num(w0));
    c.check("exact resample within 2x the Monte-Carlo floor" + s, twin < 2.0 * floor,
            "w1 " + num(twin) + ", floor " + num(floor));
  }
  const double m10 = median(tenth), mf = median(final_);
  c.report("w1_tenth_median", std::nullopt, m10);
  c.report("w1_final_median", std::nullopt, mf);
  c.check("median final W1 < half the median W1 at 10% time", mf < 0.5 * m10,
          "final " + num(mf) + ", 10% " + num(m10));
}

// --- rkhs-rate -------------------------------------------------------------

void rkhs_rate(Ctx& c) {
  const auto seeds = c.seeds(range_seeds(20));
  const auto grid = c.get<std::vector<Eigen::Index>>("n_grid", {50, 100, 200, 400, 800, 1600});
  const double shift = c.get("shift", 0.5);
  const double bandwidth = c.get("bandwidth", 1.0);
  const double lo = c.get("slope_min", -0.75);
  const double hi = c.get("slope_max", -0.25);
  auto p = [](Eigen::Index n, std::uint64_t s) { return normal_rows(n, 1, 0.0, s, 0x50); };
  auto b = [shift](Eigen::Index n, std::uint64_t s) { return normal_rows(n, 1, shift, s, 0x42); };
  c.begin_seed();
  const auto r = rkhs::rate_experiment(p, b, grid, seeds, gaussian_kl(0.0, 1.0, shift, 1.0), bandwidth);
  for (auto seed : seeds) {
    std::vector<std::vector<double>> rows;
    for (const auto& cell : r.cells)
      if (cell.seed == seed) {
        c.report("abs_error_N" + std::to_string(cell.n), seed, cell.abs_error);
        rows.push_back({static_cast<double>(cell.n), static_cast<double>(cell.seed), cell.lambda,
                        cell.value, cell.kl_true, cell.abs_error});
      }
    c.write_series(seed, "rate.csv", {"N", "seed", "lambda", "value", "kl_true", "abs_error"}, rows);
  }
  for (std::size_t i = 0; i < r.n_grid.size(); ++i)
    c.report("median_abs_error_N" + std::to_string(r.n_grid[i]), std::nullopt, r.median_errors[i]);
  c.report("slope", std::nullopt, r.slope);
  if (c.writing()) rkhs::write_rate_csv(c.dir() / "rate.csv", r);
  c.check("log-log error slope in [" + num(lo) + ", " + num(hi) + "]", r.slope >= lo && r.slope <= hi,
          "slope " + num(r.slope));
}

// --- line-gebm and temper-sweep --------------------------------------------

training::TrainConfig line_train_defaults(int base_steps) {
  training::TrainConfig t;
  t.base_steps = base_steps;
  t.batch_data = 100;
  t.batch_base = 256;
  t.lr_energy = 1e-3;
  t.lr_base = 1e-3;
  t.eval_every = 100;
  t.val_base_samples = 1000;
  t.reg.weight = 0.1;
  return t;
}

samplers::SamplerConfig line_sampler_defaults() {
  samplers::SamplerConfig s;
  s.step_size = 1e-2;
  s.gamma = 1.0;
  s.num_steps = 1000;
  s.decay_every = 0;
  return s;
}

struct LineModel {
  SyntheticDataset data;
  training::TrainResult trained;
  samplers::Gebm gebm(double beta = 1.0) const {
    return {trained.model.base, trained.model.energy, trained.state.psi, trained.state.A, beta};
  }
};

LineModel train_line(std::uint64_t seed, Eigen::Index n, const std::vector<int>& gen_hidden,
                     const std::vector<int>& energy_hidden, training::TrainConfig tc) {
  auto data = make_line_dataset(n, seed);
  auto gen = std::make_shared<models::MlpGenerator>(models::MlpSpec{1, gen_hidden, 2, Activation::Tanh, seed});
  models::BaseModel base(models::GaussianPrior(1), gen, gen->init_params());
  auto energy = std::make_shared<models::MlpEnergy>(
      models::MlpSpec{2, energy_hidden, 1, Activation::LeakyRelu, derive_stream(seed, {0x656e})});
  tc.seed = seed;
  auto trained = training::train_gebm(data.train, data.val, base, energy,
                                      training::initial_state(base, energy->init_params(), tc), tc);
  return {std::move(data), std::move(trained)};
}

double extremity_mass(const Matrix& x, double threshold) {
  return (x.col(0).array().abs() > threshold).cast<double>().mean();
}

std::vector<std::vector<double>> history_rows(const std::vector<training::HistoryRow>& h) {
  std::vector<std::vector<double>> rows;
  for (const auto& r : h) rows.push_back({static_cast<double>(r.step), r.objective, r.A, r.A_tilde, r.val_kale, r.lr});
  return rows;
}

const std::vector<std::string> kHistoryHeader{"step", "objective", "A", "A_tilde", "val_kale", "lr"};

void line_gebm(Ctx& c) {
  const auto seeds = c.seeds({0});
  const auto n = c.get<Eigen::Index>("n", 5000);
  const auto gen_hidden = c.get<std::vector<int>>("generator_hidden", {});
  const auto energy_hidden = c.get<std::vector<int>>("energy_hidden", {32, 32});
  const auto tc = c.nested("train", line_train_defaults(2000));
  const auto sc = c.nested("sampler", line_sampler_defaults());
  const auto samples = c.get<Eigen::Index>("samples", 2000);
  const double max_ratio = c.get("mmd_ratio", 0.8);
  const double threshold = c.get("extremity", 0.6);
  const auto progress_seeds = c.get<std::vector<std::uint64_t>>("progress_seeds", range_seeds(5));
  const auto progress_hidden = c.get<std::vector<int>>("progress_generator_hidden", {16});
  const int progress_steps = c.get("progress_steps", 5000);
  const long progress_early = c.get("progress_early_step", 100L);

  for (auto seed : seeds) {
    c.begin_seed();
    const LineModel m = train_line(seed, n, gen_hidden, energy_hidden, tc);
    const auto g = m.gebm();
    const auto chain = samplers::kla_chain(g.with_beta(1.0), sc, samples, derive_stream(seed, {0x73616d70}));
    const Matrix base_x = g.base.sample(samples, derive_stream(seed, {0x62617365})).x;
    const Matrix test = m.data.test.topRows(std::min(samples, m.data.test.rows()));
    const double bw = mmd_median_bandwidth(test, base_x);
    const auto mg = mmd2(test, chain.x, bw, 200, seed);
    const auto mb = mmd2(test, base_x, bw, 200, seed);
    const double eg = extremity_mass(chain.x, threshold), ep = extremity_mass(base_x, threshold);
    c.report("mmd_gebm", seed, mg.value, mg.null_stderr);
    c.report("mmd_base", seed, mb.value, mb.null_stderr);
    c.report("mmd_ratio", seed, mg.value / mb.value);
    c.report("extremity_gebm", seed, eg);
    c.report("extremity_prior", seed, ep);
    c.report("extremity_data", seed, extremity_mass(test, threshold));
    c.report("val_kale_final", seed, m.trained.state.history.empty() ? 0.0 : m.trained.state.history.back().val_kale);
    c.write_series(seed, "history.csv", kHistoryHeader, history_rows(m.trained.state.history));
    c.write_matrix(seed, "gebm_samples.csv", chain.x);
    c.write_matrix(seed, "base_samples.csv", base_x);
    const std::string s = " (seed " + std::to_string(seed) + ")";
    c.check("MMD(data, GEBM) <= " + num(max_ratio) + " MMD(data, base)" + s, mg.value <= max_ratio * mb.value,
            "gebm " + num(mg.value) + ", base " + num(mb.value));
    c.check("GEBM latent mass in the extremity region exceeds the prior's" + s, eg > ep,
            "gebm " + num(eg) + ", prior " + num(ep));
  }

  if (progress_seeds.empty()) return;
  training::TrainConfig pc = tc;
  pc.base_steps = progress_steps;
  if (progress_early % pc.eval_every != 0 || progress_early >= progress_steps)
    throw ConfigError("line-gebm: progress_early_step must be an evaluation step before the end");
  std::vector<double> deltas;
  for (auto seed : progress_seeds) {
    c.begin_seed();
    const LineModel m = train_line(seed, n, progress_hidden, energy_hidden, pc);
    const auto& h = m.trained.state.history;
    auto at = std::find_if(h.begin(), h.end(), [&](const auto& r) { return r.step == progress_early; });
    if (at == h.end() || h.empty()) throw ConfigError("line-gebm: progress history is missing");
    c.report("progress_val_kale_early", seed, at->val_kale);
    c.report("progress_val_kale_final", seed, h.back().val_kale);
    c.write_series(seed, "progress_history.csv", kHistoryHeader, history_rows(h));
    deltas.push_back(h.back().val_kale - at->val_kale);
  }
  const double md = median(deltas);
  c.report("progress_val_kale_change_median", std::nullopt, md);
  c.check("validation KALE lower at the end than at step " + std::to_string(progress_early) + " (median)",
          md < 0.0, "median change " + num(md));
}

void temper_sweep(Ctx& c) {
  const auto seeds = c.seeds({0});
  const auto n = c.get<Eigen::Index>("n", 5000);
  const auto gen_hidden = c.get<std::vector<int>>("generator_hidden", {});
  const auto energy_hidden = c.get<std::vector<int>>("energy_hidden", {32, 32});
  const auto tc = c.nested("train", line_train_defaults(1000));
  const auto sc = c.nested("sampler", line_sampler_defaults());
  const auto samples = c.get<Eigen::Index>("samples", 2000);
  const auto betas = c.get<std::vector<double>>("betas", {0.0, 0.5, 1.0, 10.0, 100.0});
  const auto cont_betas = c.get<std::vector<double>>("continuity_betas", {0.0, 1.0});
  const auto deltas = c.get<std::vector<double>>("continuity_deltas", {0.1, 0.01});
  const double alpha = c.get("alpha", 0.05);
  const double threshold = c.get("extremity", 0.6);

  for (auto seed : seeds) {
    c.begin_seed();
    const LineModel m = train_line(seed, n, gen_hidden, energy_hidden, tc);
    const auto g = m.gebm();
    const std::uint64_t chain_seed = derive_stream(seed, {0x74656d70});
    // Common random numbers: every beta reuses the same chain seed.
    std::map<double, Matrix> drawn;
    auto draw = [&](double beta) -> const Matrix& {
      auto it = drawn.find(beta);
      if (it == drawn.end())
        it = drawn.emplace(beta, samplers::sample_gebm(g.with_beta(beta), samples, sc, chain_seed)).first;
      return it->second;
    };
    const Matrix test = m.data.test.topRows(std::min(samples, m.data.test.rows()));
    const Matrix base_x = g.base.sample(samples, derive_stream(seed, {0x62617365})).x;
    const double bw = mmd_median_bandwidth(test, base_x);
    std::vector<std::vector<double>> rows;
    for (double beta : betas) {
      const Matrix& x = draw(beta);
      const auto md = mmd2(test, x, bw, 200, seed);
      const std::string b = num(beta);
      c.report("mmd_data_beta" + b, seed, md.value, md.null_stderr);
      c.report("extremity_beta" + b, seed, extremity_mass(x, threshold));
      rows.push_back({beta, md.value, extremity_mass(x, threshold)});
      if (beta == 0.0) {
        const auto mb = mmd2(x, base_x, bw, 200, seed);
        c.report("mmd_base_beta0", seed, mb.value, mb.null_stderr);
        c.report("p_value_beta0", seed, mb.p_value);
        c.check("beta = 0 samples match the base (MMD test does not reject at " + num(alpha) + ", seed " +
                    std::to_string(seed) + ")",
                mb.p_value > alpha, "p-value " + num(mb.p_value));
      }
    }
    c.write_series(seed, "sweep.csv", {"beta", "mmd_data", "extremity"}, rows);
    for (double beta : cont_betas) {
      const Matrix& x0 = draw(beta);
      double last = 0.0, last_se = 0.0;
      for (double d : deltas) {
        const auto r = mmd2(x0, draw(beta + d), bw, 200, seed);
        c.report("continuity_beta" + num(beta) + "_delta" + num(d), seed, r.value, r.null_stderr);
        last = r.value;
        last_se = r.null_stderr;
      }
      if (!deltas.empty())
        c.check("MMD between beta = " + num(beta) + " and beta + " + num(deltas.back()) +
                    " within 3 null stderr (seed " + std::to_string(seed) + ")",
                std::abs(last) <= 3.0 * last_se, "mmd " + num(last) + ", stderr " + num(last_se));
    }
  }
}

// --- density-parity --------------------------------------------------------

void density_parity(Ctx& c) {
  const auto seeds = c.seeds({0});
  const auto n = c.get<Eigen::Index>("n", 5000);
  const int layers = c.get("flow_layers", 4);
  const auto hidden = c.get<std::vector<int>>("flow_hidden", {32, 32});
  const auto act = activation(c.get<std::string>("flow_activation", "leaky_relu"));
  training::DensityConfig ml_def;
  ml_def.steps = 3000;
  ml_def.lr = 1e-3;
  ml_def.eval_every = 500;
  const auto ml_cfg = c.nested("ml", ml_def);
  training::DensityConfig cd_def = ml_def;
  cd_def.steps = 1000;
  const auto cd_cfg = c.nested("cd", cd_def);
  training::TrainConfig tr_def;
  tr_def.base_steps = 1000;
  tr_def.batch_data = 100;
  tr_def.batch_base = 256;
  tr_def.lr_energy = 1e-3;
  tr_def.lr_base = 1e-3;
  tr_def.eval_every = 200;
  tr_def.val_base_samples = 1000;
  const auto tr_cfg = c.nested("train", tr_def);
  const auto mc = c.get<Eigen::Index>("mc_samples", 1000000);
  const double ml_tol = c.get("ml_tolerance", 0.1);
  const double cd_tol = c.get("cd_tolerance", 0.3);

  for (auto seed : seeds) {
    c.begin_seed();
    const auto data = make_ring_dataset(n, seed);
    const models::RealNvpSpec base_spec{2, layers, hidden, act, seed, true};
    models::RealNvpSpec h_spec = base_spec;
    h_spec.seed = derive_stream(seed, {0x68});
    auto gen = std::make_shared<models::FlowGenerator>(base_spec);
    const models::BaseModel flow(models::GaussianPrior(2), gen, gen->init_params());

    auto ml_c = ml_cfg;
    ml_c.seed = seed;
    const auto ml = training::train_flow_ml(data.train, flow, ml_c);
    const double nll_ml = training::flow_nll(flow.with_params(ml.params), data.test);

    auto tr = tr_cfg;
    tr.seed = seed;
    auto energy = std::make_shared<models::FlowRatioEnergy>(h_spec, base_spec, flow.theta());
    const auto g = training::train_gebm(data.train, data.val, flow, energy,
                                        training::initial_state(flow, energy->init_params(), tr), tr);
    const double nll_gebm = training::eval_nll_gebm(g.model.base, *g.model.energy, g.state.psi, data.test, mc,
                                                    derive_stream(seed, {0x6d63}));

    auto cd_c = cd_cfg;
    cd_c.seed = seed;
    auto h = std::make_shared<models::FlowEnergy>(h_spec);
    const auto cd = training::train_ebm_cd(data.train, h, h->init_params(), cd_c);
    const double nll_cd = models::energy_eval(*h, cd.params, data.test).mean();

    c.report("nll_gebm", seed, nll_gebm);
    c.report("nll_ml", seed, nll_ml);
    c.report("nll_cd", seed, nll_cd);
    c.report("nll_base_only", seed, training::flow_nll(g.model.base, data.test));
    c.report("nll_true", seed, -data.log_density(data.test).mean());
    c.write_series(seed, "history.csv", kHistoryHeader, history_rows(g.state.history));
    const std::string s = " (seed " + std::to_string(seed) + ")";
    c.check("|NLL(GEBM) - NLL(ML)| <= " + num(ml_tol) + s, std::abs(nll_gebm - nll_ml) <= ml_tol,
            "gebm " + num(nll_gebm) + ", ml " + num(nll_ml));
    c.check("|NLL(GEBM) - NLL(CD)| <= " + num(cd_tol) + s, std::abs(nll_gebm - nll_cd) <= cd_tol,
            "gebm " + num(nll_gebm) + ", cd " + num(nll_cd));
  }
}

using Runner = std::function<void(Ctx&)>;

struct Entry {
  std::vector<std::string> keys;
  Runner run;
};

const std::map<std::string, Entry>& registry() {
  static const std::map<std::string, Entry> r{
      {"kale-gaussian", {{"n", "shift", "null_tolerance", "min_value", "hidden", "kale"}, kale_gaussian}},
      {"amortized-vs-batch",
       {{"batch", "updates", "lr_A", "mc_samples", "energy_hidden", "energy_seed", "energy_bias", "min_ratio"},
        amortized_vs_batch}},
      {"sampler-moments",
       {{"dim", "chains", "steps", "step_size", "gamma", "u", "snapshot_every", "tail_fraction", "tolerance"},
        sampler_moments}},
      {"w1-decay",
       {{"chains", "steps", "checkpoint_every", "step_size", "gamma", "u", "exact_samples", "a", "b"}, w1_decay}},
      {"rkhs-rate", {{"n_grid", "shift", "bandwidth", "slope_min", "slope_max"}, rkhs_rate}},
      {"line-gebm",
       {{"n", "generator_hidden", "energy_hidden", "train", "sampler", "samples", "mmd_ratio", "extremity",
         "progress_seeds", "progress_generator_hidden", "progress_steps", "progress_early_step"},
        line_gebm}},
      {"density-parity",
       {{"n", "flow_layers", "flow_hidden", "flow_activation", "ml", "cd", "train", "mc_samples", "ml_tolerance",
         "cd_tolerance"},
        density_parity}},
      {"temper-sweep",
       {{"n", "generator_hidden", "energy_hidden", "train", "sampler", "samples", "betas", "continuity_betas",
         "continuity_deltas", "alpha", "extremity"},
        temper_sweep}},
  };
  return r;
}

void write_outputs(const std::filesystem::path& dir, const BenchResult& r) {
  io::write_text(dir / "summary.json", to_json(r).dump(2) + "\n");
  std::map<std::uint64_t, json> per_seed;
  json timing = json::array();
  for (const auto& rep : r.reports) {
    if (rep.seed) per_seed[*rep.seed].push_back(to_json(rep));
    timing.push_back({{"metric", rep.metric}, {"seed", rep.seed ? json(*rep.seed) : json()}, {"wall_time", rep.wall_time}});
  }
  for (const auto& [seed, reports] : per_seed) {
    json j = {{"experiment", r.experiment}, {"seed", seed}, {"config", r.config}, {"reports", reports}};
    io::write_text(dir / std::to_string(seed) / "report.json", j.dump(2) + "\n");
  }
  io::write_text(dir / "timing.json", timing.dump(2) + "\n");
}

}  // namespace

bool BenchResult::passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.passed; });
}

std::vector<MetricReport> BenchResult::metric(const std::string& name) const {
  std::vector<MetricReport> out;
  for (const auto& r : reports)
    if (r.metric == name) out.push_back(r);
  return out;
}

const std::vector<std::string>& registered_experiments() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : registry()) n.push_back(k);
    return n;
  }();
  return names;
}

BenchResult run_benchmark(const std::string& name, const json& config, const std::filesystem::path& out_root) {
  auto it = registry().find(name);
  if (it == registry().end()) {
    std::string list;
    for (const auto& n : registered_experiments()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown experiment '" + name + "'; registered: " + list);
  }
  BenchResult result;
  Ctx ctx(name, config.is_null() ? json::object() : config, it->second.keys, out_root, result);
  it->second.run(ctx);
  ctx.finish();
  if (ctx.writing()) write_outputs(ctx.dir(), result);
  return result;
}

json to_json(const MetricReport& r, bool with_time) {
  json j = {{"metric", r.metric},
            {"seed", r.seed ? json(*r.seed) : json()},
            {"value", r.value},
            {"stderr", r.std_error}};
  if (with_time) j["wall_time"] = r.wall_time;
  return j;
}

json to_json(const BenchResult& r) {
  json reports = json::array(), assertions = json::array();
  for (const auto& rep : r.reports) reports.push_back(to_json(rep));
  for (const auto& a : r.assertions) assertions.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
  return {{"experiment", r.experiment},
          {"config", r.config},
          {"passed", r.passed()},
          {"assertions", assertions},
          {"reports", reports}};
}

}  // namespace gebm::bench

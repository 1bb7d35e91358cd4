#include "gebm/cli/lab.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "gebm/bench/datasets.hpp"
#include "gebm/bench/experiments.hpp"
#include "gebm/error.hpp"
#include "gebm/io/csv.hpp"
#include "gebm/io/json_util.hpp"
#include "gebm/kale/kale.hpp"
#include "gebm/random.hpp"
#include "gebm/rkhs/rkhs_kale.hpp"
#include "gebm/samplers/langevin.hpp"
#include "gebm/training/density.hpp"
#include "gebm/training/train.hpp"

namespace gebm::cli {

namespace fs = std::filesystem;
using ad::Matrix;
using models::Activation;
using nlohmann::json;

namespace {

constexpr std::uint64_t kGeneratorTag = 0x67656e;
constexpr std::uint64_t kEnergyTag = 0x656e72;

Activation activation(const std::string& name, const std::string& where) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  throw ConfigError(where + ".activation: expected tanh or leaky_relu, got '" + name + "'");
}

void write_echo(const fs::path& dir, const json& echo) {
  io::write_text(dir / "config-echo.json", echo.dump(2) + "\n");
}

/// Overlays `user` on a library struct's JSON defaults and parses the result.
template <class T>
T overlay(const json& user, const char* key, const T& def, const std::string& where) {
  json j = def;
  if (user.contains(key)) {
    if (!user.at(key).is_object()) throw ConfigError(where + "." + key + ": expected a JSON object");
    for (const auto& item : user.at(key).items()) j[item.key()] = item.value();
  }
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::string absolute_path(const std::string& p) { return fs::absolute(fs::path(p)).lexically_normal().string(); }

// --- train -----------------------------------------------------------------

struct ModelBlock {
  std::string family;
  int latent_dim = 1;
  std::vector<int> hidden;
  std::string activation;
  int layers = 4;

  json echo() const {
    json j = {{"family", family}};
    if (family == "identity") return j;
    if (family == "mlp" && latent_dim > 0) j["latent_dim"] = latent_dim;
    j["hidden"] = hidden;
    j["activation"] = activation;
    if (family != "mlp") j["layers"] = layers;
    return j;
  }
};

ModelBlock read_block(const json& cfg, const char* key, ModelBlock b) {
  const std::string where = key;
  if (cfg.contains(key)) {
    const json& j = cfg.at(key);
    io::check_keys(j, {"family", "latent_dim", "hidden", "activation", "layers"}, where);
    io::read_opt(j, "family", b.family, where);
    io::read_opt(j, "latent_dim", b.latent_dim, where);
    io::read_opt(j, "hidden", b.hidden, where);
    io::read_opt(j, "activation", b.activation, where);
    io::read_opt(j, "layers", b.layers, where);
  }
  activation(b.activation, where);
  return b;
}

struct Data {
  Matrix train, val, test;
};

Data load_data(const std::string& dataset, Eigen::Index n, const std::string& csv, std::uint64_t seed) {
  if (dataset == "csv") {
    if (csv.empty()) throw ConfigError("data_csv: required when dataset is 'csv'");
    const Matrix all = io::read_matrix_csv(csv);
    const Eigen::Index nv = bench::validation_size(all.rows());
    if (all.rows() - nv < 1) throw ConfigError("data_csv: needs at least two rows");
    return {all.topRows(all.rows() - nv), all.bottomRows(nv), all.bottomRows(nv)};
  }
  auto d = bench::make_dataset(dataset, n, seed);
  return {d.train, d.val, d.test};
}

models::RealNvpSpec flow_spec(const ModelBlock& b, int dim, std::uint64_t seed) {
  return {dim, b.layers, b.hidden, activation(b.activation, "flow"), seed, true};
}

}  // namespace

fs::path default_out_root() {
  const char* env = std::getenv("GEBM_LAB_OUT");
  return env && *env ? fs::path(env) : fs::path("gebm_out");
}

json cmd_train(const json& config, const fs::path& out_dir, std::ostream& log) {
  const std::string where = "train";
  io::check_keys(config,
                 {"method", "seed", "dataset", "n", "data_csv", "generator", "energy", "train", "density",
                  "nll_mc_samples"},
                 where);
  std::string method = "gebm", dataset = "line", csv;
  std::uint64_t seed = 0;
  Eigen::Index n = 5000, mc = 100000;
  io::read_opt(config, "method", method, where);
  io::read_opt(config, "seed", seed, where);
  io::read_opt(config, "dataset", dataset, where);
  io::read_opt(config, "n", n, where);
  io::read_opt(config, "data_csv", csv, where);
  io::read_opt(config, "nll_mc_samples", mc, where);
  if (method != "gebm" && method != "ml" && method != "cd")
    throw ConfigError("method: expected gebm, ml or cd, got '" + method + "'");
  if (!csv.empty()) csv = absolute_path(csv);

  const ModelBlock generator =
      read_block(config, "generator", {method == "gebm" ? "mlp" : "flow", 1, {16}, "tanh", 4});
  const ModelBlock energy_block =
      read_block(config, "energy", {method == "cd" ? "flow" : "mlp", 1, {32, 32}, "leaky_relu", 4});
  const Data data = load_data(dataset, n, csv, seed);
  const int dim = static_cast<int>(data.train.cols());
  const std::uint64_t gseed = derive_stream(seed, {kGeneratorTag});
  const std::uint64_t eseed = derive_stream(seed, {kEnergyTag});

  json echo = {{"method", method}, {"seed", seed}, {"dataset", dataset}};
  if (dataset == "csv")
    echo["data_csv"] = csv;
  else
    echo["n"] = n;
  fs::create_directories(out_dir);
  json metrics = json::object();

  if (method == "gebm") {
    models::GeneratorPtr gen;
    int latent = dim;
    if (generator.family == "identity") {
      gen = std::make_shared<models::IdentityGenerator>(dim);
    } else if (generator.family == "mlp") {
      latent = generator.latent_dim;
      gen = std::make_shared<models::MlpGenerator>(models::MlpSpec{
          latent, generator.hidden, dim, activation(generator.activation, "generator"), gseed});
    } else if (generator.family == "flow") {
      gen = std::make_shared<models::FlowGenerator>(flow_spec(generator, dim, gseed));
    } else {
      throw ConfigError("generator.family: expected identity, mlp or flow, got '" + generator.family + "'");
    }
    const models::BaseModel base(models::GaussianPrior(latent), gen, gen->init_params());
    models::EnergyPtr energy;
    if (energy_block.family == "mlp") {
      energy = std::make_shared<models::MlpEnergy>(models::MlpSpec{
          dim, energy_block.hidden, 1, activation(energy_block.activation, "energy"), eseed});
    } else if (energy_block.family == "flow_ratio") {
      if (generator.family != "flow") throw ConfigError("energy.family flow_ratio needs generator.family flow");
      energy = std::make_shared<models::FlowRatioEnergy>(flow_spec(energy_block, dim, eseed),
                                                         flow_spec(generator, dim, gseed), base.theta());
    } else {
      throw ConfigError("energy.family: expected mlp or flow_ratio for method gebm, got '" + energy_block.family + "'");
    }
    training::TrainConfig tc = overlay(config, "train", training::TrainConfig{}, where);
    tc.seed = seed;
    echo["generator"] = generator.echo();
    echo["energy"] = energy_block.echo();
    echo["train"] = tc;
    if (generator.family == "flow") echo["nll_mc_samples"] = mc;
    write_echo(out_dir, echo);
    try {
      const auto res = training::train_gebm(data.train, data.val, base, energy,
                                            training::initial_state(base, energy->init_params(), tc), tc);
      training::save_checkpoint(out_dir, res.model, res.state, tc);
      training::write_history_csv(out_dir / "history.csv", res.state.history);
      if (!res.state.history.empty()) metrics["val_kale"] = res.state.history.back().val_kale;
      metrics["A"] = res.state.A;
      if (generator.family == "flow")
        metrics["nll_test"] = training::eval_nll_gebm(res.model.base, *res.model.energy, res.state.psi, data.test,
                                                      mc, derive_stream(seed, {0x6d63}));
    } catch (const training::TrainDiverged& e) {
      // Keep the last finite state for inspection.
      training::save_checkpoint(out_dir / "last-finite", {base.with_params(e.state().theta), energy}, e.state(), tc);
      throw;
    }
  } else {
    training::DensityConfig dc = overlay(config, "density", training::DensityConfig{}, where);
    dc.seed = seed;
    training::TrainConfig unused;
    unused.seed = seed;
    std::vector<std::vector<double>> rows;
    if (method == "ml") {
      if (generator.family != "flow") throw ConfigError("generator.family: method ml needs a flow");
      auto gen = std::make_shared<models::FlowGenerator>(flow_spec(generator, dim, gseed));
      const models::BaseModel flow(models::GaussianPrior(dim), gen, gen->init_params());
      echo["generator"] = generator.echo();
      echo["density"] = dc;
      write_echo(out_dir, echo);
      const auto res = training::train_flow_ml(data.train, flow, dc);
      const models::BaseModel trained = flow.with_params(res.params);
      auto zero = std::make_shared<models::ZeroEnergy>(dim);
      training::save_checkpoint(out_dir, {trained, zero},
                                training::initial_state(trained, zero->init_params(), unused), unused);
      for (const auto& [s, v] : res.history) rows.push_back({static_cast<double>(s), v});
      metrics["nll_test"] = training::flow_nll(trained, data.test);
    } else {
      if (energy_block.family != "flow") throw ConfigError("energy.family: method cd needs a flow");
      const auto h_spec = flow_spec(energy_block, dim, eseed);
      auto h = std::make_shared<models::FlowEnergy>(h_spec);
      echo["energy"] = energy_block.echo();
      echo["density"] = dc;
      write_echo(out_dir, echo);
      const auto res = training::train_ebm_cd(data.train, h, h->init_params(), dc);
      // exp(-h) as a GEBM: identity flow base, energy h - r_base, A = 0.
      auto id_spec = h_spec;
      id_spec.seed = gseed;
      auto gen = std::make_shared<models::FlowGenerator>(id_spec);
      const models::BaseModel base(models::GaussianPrior(dim), gen, gen->init_params());
      auto energy = std::make_shared<models::FlowRatioEnergy>(h_spec, id_spec, base.theta());
      auto state = training::initial_state(base, res.params, unused);
      state.A_initialized = true;
      training::save_checkpoint(out_dir, {base, energy}, state, unused);
      for (const auto& [s, v] : res.history) rows.push_back({static_cast<double>(s), v});
      metrics["nll_test"] = models::energy_eval(*h, res.params, data.test).mean();
    }
    io::write_series_csv(out_dir / "history.csv", {"step", "nll"}, rows);
  }
  io::write_text(out_dir / "metrics.json", metrics.dump(2) + "\n");
  log << "train: wrote " << out_dir.string() << "\n";
  return echo;
}

json cmd_sample(const json& config, const fs::path& out_dir, std::ostream& log) {
  const std::string where = "sample";
  if (!config.is_object()) throw ConfigError("sample: expected a JSON object");
  std::string checkpoint;
  Eigen::Index n = 1000;
  std::uint64_t seed = 0;
  double beta = 1.0;
  io::read_opt(config, "checkpoint", checkpoint, where);
  io::read_opt(config, "n", n, where);
  io::read_opt(config, "seed", seed, where);
  io::read_opt(config, "beta", beta, where);
  if (checkpoint.empty()) throw ConfigError("checkpoint: required");
  if (n < 1) throw ConfigError("n: must be >= 1");
  if (!(beta >= 0.0)) throw ConfigError("beta: must be >= 0");
  json rest = config;
  for (const char* k : {"checkpoint", "n", "seed", "beta"}) rest.erase(k);
  json merged = samplers::SamplerConfig{};
  for (const auto& item : rest.items()) merged[item.key()] = item.value();
  samplers::SamplerConfig sc;
  try {
    sc = merged.get<samplers::SamplerConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sample: ") + e.what());
  }
  checkpoint = absolute_path(checkpoint);
  const auto ck = training::load_checkpoint(checkpoint);
  json echo = {{"checkpoint", checkpoint}, {"n", n}, {"seed", seed}, {"beta", beta}};
  echo.update(json(sc));
  fs::create_directories(out_dir);
  write_echo(out_dir, echo);
  const samplers::Gebm g{ck.model.base, ck.model.energy, ck.state.psi, ck.state.A, beta};
  const auto chain = sc.kind == samplers::SamplerKind::Ula ? samplers::ula_chain(g, sc, n, seed)
                                                           : samplers::kla_chain(g, sc, n, seed);
  io::write_matrix_csv(out_dir / "samples.csv", chain.x);
  io::write_matrix_csv(out_dir / "latents.csv", chain.z);
  if (sc.trace_every > 0) samplers::write_trace_csv(out_dir / "trace.csv", chain.trace);
  log << "sample: wrote " << n << " rows to " << (out_dir / "samples.csv").string() << "\n";
  return echo;
}

json cmd_kale(const json& config, const fs::path& out_dir, std::ostream& log) {
  const std::string where = "kale";
  io::check_keys(config, {"x", "y", "family", "seed", "hidden", "activation", "kale", "bandwidth", "lambda"},
                 where);
  std::string xp, yp, family = "mlp", act = "tanh";
  std::uint64_t seed = 0;
  std::vector<int> hidden{32, 32};
  double bandwidth = 0.0, lambda = 0.0;
  io::read_opt(config, "x", xp, where);
  io::read_opt(config, "y", yp, where);
  io::read_opt(config, "family", family, where);
  io::read_opt(config, "seed", seed, where);
  io::read_opt(config, "hidden", hidden, where);
  io::read_opt(config, "activation", act, where);
  io::read_opt(config, "bandwidth", bandwidth, where);
  io::read_opt(config, "lambda", lambda, where);
  if (xp.empty() || yp.empty()) throw ConfigError("kale: both x and y CSV paths are required");
  if (family != "mlp" && family != "rkhs") throw ConfigError("family: expected mlp or rkhs, got '" + family + "'");
  xp = absolute_path(xp);
  yp = absolute_path(yp);
  const Matrix x = io::read_matrix_csv(xp);
  const Matrix y = io::read_matrix_csv(yp);
  if (x.cols() != y.cols())
    throw ConfigError("kale: x has " + std::to_string(x.cols()) + " columns but y has " + std::to_string(y.cols()));

  json echo = {{"x", xp}, {"y", yp}, {"family", family}, {"seed", seed}};
  json result;
  fs::create_directories(out_dir);
  if (family == "mlp") {
    kale::KaleConfig kc = overlay(config, "kale", kale::KaleConfig{}, where);
    kc.seed = seed;
    echo["hidden"] = hidden;
    echo["activation"] = act;
    echo["kale"] = kc;
    write_echo(out_dir, echo);
    auto energy = std::make_shared<models::MlpEnergy>(models::MlpSpec{
        static_cast<int>(x.cols()), hidden, 1, activation(act, where), derive_stream(seed, {kEnergyTag})});
    const auto est = kale::kale(x, y, energy, kc);
    kale::write_trace_csv(out_dir / "trace.csv", est);
    result = {{"value", est.value},
              {"family", family},
              {"stderr", kale::dv_stderr(*energy, est.state.psi, x, y)},
              {"config", echo}};
  } else {
    if (!(bandwidth >= 0.0) || !(lambda >= 0.0)) throw ConfigError("kale: bandwidth and lambda must be >= 0");
    const double bw = bandwidth > 0.0 ? bandwidth : rkhs::median_bandwidth(y);
    const double lam = lambda > 0.0 ? lambda : 1.0 / std::sqrt(static_cast<double>(x.rows()));
    echo["bandwidth"] = bw;
    echo["lambda"] = lam;
    write_echo(out_dir, echo);
    const auto p = rkhs::build_problem(x, y, bw, lam);
    const auto s = rkhs::newton_solve(p);
    result = {{"value", rkhs::rkhs_kale_value(s, p)},
              {"family", family},
              {"alpha", s.alpha},
              {"c", s.c},
              {"iterations", s.iterations},
              {"config", echo}};
  }
  io::write_text(out_dir / "result.json", result.dump(2) + "\n");
  log << result.dump() << "\n";
  return echo;
}

bool cmd_bench(const json& config, const fs::path& out_root, std::ostream& log) {
  if (!config.is_object()) throw ConfigError("bench: expected a JSON object");
  std::string name;
  io::read_opt(config, "experiment", name, "bench");
  if (name.empty()) throw ConfigError("bench: experiment name required");
  json rest = config;
  rest.erase("experiment");
  const auto r = bench::run_benchmark(name, rest, out_root);
  json echo = {{"experiment", name}};
  echo.update(r.config);
  write_echo(out_root / name, echo);
  for (const auto& a : r.assertions)
    log << (a.passed ? "PASS " : "FAIL ") << name << ": " << a.name << " [" << a.detail << "]\n";
  log << name << (r.passed() ? ": all assertions passed" : ": assertion failure") << "\n";
  return r.passed();
}

namespace {

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  try {
    json j = json::parse(io::read_text(path));
    if (!j.is_object()) throw ConfigError("config file " + path + ": expected a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

template <class T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generalized energy-based models: training, sampling, KALE estimation and benchmarks", "gebm_lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;

  auto* train = app.add_subcommand("train", "Train a GEBM (or an ML flow / CD baseline)");
  std::optional<std::string> method, dataset, data_csv;
  std::optional<long> n_data;
  train->add_option("--config", config_path, "JSON config");
  train->add_option("--out", out_dir, "Output directory");
  train->add_option("--seed", seed);
  train->add_option("--method", method, "gebm, ml or cd");
  train->add_option("--dataset", dataset, "line, ring, gaussian or csv");
  train->add_option("--data-csv", data_csv);
  train->add_option("--n", n_data, "Synthetic training rows");

  auto* sample = app.add_subcommand("sample", "Draw samples from a trained GEBM checkpoint");
  std::optional<std::string> checkpoint, sampler;
  std::optional<long> n_samples;
  std::optional<int> steps, decay_every, trace_every;
  std::optional<double> step_size, gamma, u, beta, decay_factor;
  sample->add_option("--config", config_path, "JSON config");
  sample->add_option("--checkpoint", checkpoint, "Directory written by train");
  sample->add_option("--out", out_dir, "Output directory");
  sample->add_option("--n", n_samples, "Number of chains / samples");
  sample->add_option("--sampler", sampler, "ula or kla");
  sample->add_option("--steps", steps);
  sample->add_option("--step-size", step_size);
  sample->add_option("--gamma", gamma);
  sample->add_option("--u", u);
  sample->add_option("--beta", beta, "Inverse temperature on the energy");
  sample->add_option("--seed", seed);
  sample->add_option("--decay-every", decay_every);
  sample->add_option("--decay-factor", decay_factor);
  sample->add_option("--trace-every", trace_every);

  auto* kale_cmd = app.add_subcommand("kale", "Estimate KALE between two CSV sample sets");
  std::optional<std::string> x_csv, y_csv, family;
  std::optional<double> lambda, bandwidth;
  kale_cmd->add_option("--config", config_path, "JSON config");
  kale_cmd->add_option("--x", x_csv, "Samples of P (CSV, no header)");
  kale_cmd->add_option("--y", y_csv, "Samples of B (CSV, no header)");
  kale_cmd->add_option("--family", family, "mlp or rkhs");
  kale_cmd->add_option("--seed", seed);
  kale_cmd->add_option("--lambda", lambda, "rkhs: ridge weight (default 1/sqrt(N))");
  kale_cmd->add_option("--bandwidth", bandwidth, "rkhs: kernel bandwidth (default median heuristic)");
  kale_cmd->add_option("--out", out_dir, "Output directory");

  auto* bench_cmd = app.add_subcommand("bench", "Run a registered experiment");
  std::optional<std::string> experiment;
  std::vector<std::uint64_t> seeds;
  bench_cmd->add_option("experiment", experiment, "Experiment name");
  bench_cmd->add_option("--config", config_path, "JSON config");
  bench_cmd->add_option("--out", out_dir, "Output root");
  bench_cmd->add_option("--seeds", seeds, "Seed list");
  auto* list = bench_cmd->add_flag("--list", "Print the registered experiments");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    json cfg = read_config(config_path);
    const fs::path root = default_out_root();
    if (train->parsed()) {
      put(cfg, "seed", seed);
      put(cfg, "method", method);
      put(cfg, "dataset", dataset);
      put(cfg, "data_csv", data_csv);
      put(cfg, "n", n_data);
      cmd_train(cfg, out_dir.empty() ? root / "train" : fs::path(out_dir), err);
    } else if (sample->parsed()) {
      put(cfg, "checkpoint", checkpoint);
      put(cfg, "n", n_samples);
      put(cfg, "sampler", sampler);
      put(cfg, "steps", steps);
      put(cfg, "step_size", step_size);
      put(cfg, "gamma", gamma);
      put(cfg, "u", u);
      put(cfg, "beta", beta);
      put(cfg, "seed", seed);
      put(cfg, "decay_every", decay_every);
      put(cfg, "decay_factor", decay_factor);
      put(cfg, "trace_every", trace_every);
      cmd_sample(cfg, out_dir.empty() ? root / "sample" : fs::path(out_dir), err);
    } else if (kale_cmd->parsed()) {
      put(cfg, "x", x_csv);
      put(cfg, "y", y_csv);
      put(cfg, "family", family);
      put(cfg, "seed", seed);
      put(cfg, "lambda", lambda);
      put(cfg, "bandwidth", bandwidth);
      cmd_kale(cfg, out_dir.empty() ? root / "kale" : fs::path(out_dir), out);
    } else if (bench_cmd->parsed()) {
      if (list->count() > 0) {
        for (const auto& name : bench::registered_experiments()) out << name << "\n";
        return kOk;
      }
      put(cfg, "experiment", experiment);
      if (!seeds.empty()) cfg["seeds"] = seeds;
      if (!cmd_bench(cfg, out_dir.empty() ? root : fs::path(out_dir), out)) return kAssertionFailed;
    }
    return kOk;
  } catch (const DivergenceError& e) {
    err << "error: diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
}

}  // namespace gebm::cli

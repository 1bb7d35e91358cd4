#include "gebm/samplers/langevin.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "gebm/bench/metrics.hpp"
#include "gebm/error.hpp"
#include "gebm/io/csv.hpp"
#include "gebm/io/json_util.hpp"

namespace gebm::samplers {

namespace {

// Independent noise per chain: row i comes from stream (seed, i).
class ChainNoise {
 public:
  ChainNoise(std::uint64_t seed, Eigen::Index n) {
    rngs_.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) rngs_.emplace_back(seed, static_cast<std::uint64_t>(i));
  }
  Matrix normal(Eigen::Index cols) {
    Matrix w(static_cast<Eigen::Index>(rngs_.size()), cols);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rngs_[static_cast<std::size_t>(i)].normal();
    return w;
  }

 private:
  std::vector<Rng> rngs_;
};

void check_state(const Matrix& z, int step) {
  if (!z.allFinite())
    throw DivergenceError("sampler state became non-finite at step " + std::to_string(step), step);
}

void record(std::vector<TraceRow>& trace, const Gebm& g, const SamplerConfig& c, int step,
            const Matrix& z) {
  if (c.trace_every <= 0 || step % c.trace_every != 0) return;
  const Matrix z0 = z.topRows(1);
  trace.push_back({step, z0.row(0).transpose(), log_unnormalized(g, z0)[0], c.step_size_at(step)});
}

}  // namespace

Gebm Gebm::with_beta(double b) const {
  Gebm out = *this;
  out.beta = b;
  return out;
}

Matrix posterior_grad(const Gebm& g, const Matrix& z) {
  Matrix grad = g.base.prior().score(z);
  if (g.beta == 0.0) return grad;
  ad::Tape t;
  auto theta = t.bind(g.base.theta(), false);
  auto psi = t.bind(g.psi, false);
  ad::Var zv = t.variable(z);
  ad::Var e = g.energy->apply(t, psi, g.base.generator().apply(t, theta, zv));
  t.backward(ad::sum(e));
  grad -= g.beta * t.gradient(zv);
  return grad;
}

Vector log_unnormalized(const Gebm& g, const Matrix& z) {
  Vector out = g.base.prior().log_density(z);
  if (g.beta != 0.0) out -= g.beta * models::energy_eval(*g.energy, g.psi, g.base.generate(z));
  return out;
}

void SamplerConfig::validate() const {
  if (!(step_size >= 0.0)) throw ConfigError("sampler.step_size must be >= 0");
  if (!(u > 0.0)) throw ConfigError("sampler.u must be > 0");
  if (!(gamma >= 0.0)) throw ConfigError("sampler.gamma must be >= 0");
  if (num_steps < 0) throw ConfigError("sampler.steps must be >= 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0))
    throw ConfigError("sampler.decay_factor must be in (0, 1]");
  if (decay_every < 0) throw ConfigError("sampler.decay_every must be >= 0");
}

double SamplerConfig::step_size_at(int step) const {
  if (decay_every <= 0) return step_size;
  return step_size * std::pow(decay_factor, static_cast<double>(step / decay_every));
}

std::string to_string(SamplerKind k) { return k == SamplerKind::Ula ? "ula" : "kla"; }

SamplerKind sampler_kind(const std::string& name) {
  if (name == "ula") return SamplerKind::Ula;
  if (name == "kla") return SamplerKind::Kla;
  throw ConfigError("unknown sampler '" + name + "' (expected ula or kla)");
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = {{"sampler", to_string(c.kind)}, {"step_size", c.step_size},
       {"gamma", c.gamma},             {"u", c.u},
       {"steps", c.num_steps},         {"decay_factor", c.decay_factor},
       {"decay_every", c.decay_every}, {"trace_every", c.trace_every}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  const std::string where = "sampler";
  io::check_keys(j, {"sampler", "step_size", "gamma", "u", "steps", "decay_factor", "decay_every",
                     "trace_every"},
                 where);
  if (j.contains("sampler")) {
    std::string k;
    io::read_opt(j, "sampler", k, where);
    c.kind = sampler_kind(k);
  }
  io::read_opt(j, "step_size", c.step_size, where);
  io::read_opt(j, "gamma", c.gamma, where);
  io::read_opt(j, "u", c.u, where);
  io::read_opt(j, "steps", c.num_steps, where);
  io::read_opt(j, "decay_factor", c.decay_factor, where);
  io::read_opt(j, "decay_every", c.decay_every, where);
  io::read_opt(j, "trace_every", c.trace_every, where);
  c.validate();
}

Matrix initial_latents(const Gebm& g, Eigen::Index n, std::uint64_t seed) {
  const auto& prior = g.base.prior();
  Matrix z(n, prior.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    // Stream ids above the chain-noise range keep initial draws separate.
    Rng rng(seed, derive_stream(seed, {0x696e6974, static_cast<std::uint64_t>(i)}));
    z.row(i) = prior.sample(1, rng).row(0);
  }
  return z;
}

ChainResult ula_chain(const Gebm& g, const SamplerConfig& config, Eigen::Index n_chains,
                      std::uint64_t seed, const Observer& observer) {
  config.validate();
  if (n_chains < 1) throw ConfigError("need at least one chain");
  ChainResult out;
  Matrix z = initial_latents(g, n_chains, seed);
  ChainNoise noise(seed, n_chains);
  const Matrix no_momentum;
  if (observer) observer(0, z, no_momentum);
  record(out.trace, g, config, 0, z);
  for (int t = 0; t < config.num_steps; ++t) {
    const double lam = config.step_size_at(t);
    const Matrix w = noise.normal(z.cols());
    if (lam > 0.0) z += lam * posterior_grad(g, z) + std::sqrt(2.0 * lam) * w;
    check_state(z, t + 1);
    if (observer) observer(t + 1, z, no_momentum);
    record(out.trace, g, config, t + 1, z);
  }
  out.x = g.base.generate(z);
  out.z = std::move(z);
  return out;
}

ChainResult kla_chain(const Gebm& g, const SamplerConfig& config, Eigen::Index n_chains,
                      std::uint64_t seed, const Observer& observer) {
  config.validate();
  if (n_chains < 1) throw ConfigError("need at least one chain");
  ChainResult out;
  Matrix z = initial_latents(g, n_chains, seed);
  Matrix v = Matrix::Zero(z.rows(), z.cols());
  ChainNoise noise(seed, n_chains);
  if (observer) observer(0, z, v);
  record(out.trace, g, config, 0, z);
  const double u = config.u;
  for (int t = 0; t < config.num_steps; ++t) {
    const double lam = config.step_size_at(t);
    const Matrix w = noise.normal(z.cols());
    const double decay = std::exp(-config.gamma * lam);
    const double kick = std::sqrt(u * (1.0 - decay * decay));
    z += 0.5 * lam * v;
    const Matrix y = posterior_grad(g, z);
    v += 0.5 * u * lam * y;
    v = decay * v + kick * w;
    v += 0.5 * u * lam * y;
    z += 0.5 * lam * v;
    check_state(z, t + 1);
    check_state(v, t + 1);
    if (observer) observer(t + 1, z, v);
    record(out.trace, g, config, t + 1, z);
  }
  out.x = g.base.generate(z);
  out.z = std::move(z);
  return out;
}

Matrix sample_gebm(const Gebm& g, Eigen::Index n, const SamplerConfig& config, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample count must be >= 1");
  return config.kind == SamplerKind::Ula ? ula_chain(g, config, n, seed).x
                                         : kla_chain(g, config, n, seed).x;
}

std::vector<std::pair<int, double>> w1_decay_diagnostic(const Gebm& g, const SamplerConfig& config,
                                                        const std::vector<int>& checkpoints,
                                                        Eigen::Index n_chains,
                                                        const Vector& exact, std::uint64_t seed) {
  if (g.base.data_dim() != 1) throw DimensionError("w1 decay diagnostic needs a 1-D GEBM");
  for (std::size_t i = 1; i < checkpoints.size(); ++i)
    if (checkpoints[i] <= checkpoints[i - 1]) throw ConfigError("checkpoints must increase");
  SamplerConfig c = config;
  c.num_steps = checkpoints.empty() ? 0 : checkpoints.back();
  std::vector<std::pair<int, double>> series;
  std::size_t next = 0;
  auto observe = [&](int step, const Matrix& z, const Matrix&) {
    if (next < checkpoints.size() && step == checkpoints[next]) {
      const Matrix x = g.base.generate(z);
      series.emplace_back(step, bench::w1_1d(x.col(0), exact));
      ++next;
    }
  };
  if (c.kind == SamplerKind::Ula)
    ula_chain(g, c, n_chains, seed, observe);
  else
    kla_chain(g, c, n_chains, seed, observe);
  return series;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
  const Eigen::Index k = trace.empty() ? 0 : std::min<Eigen::Index>(trace.front().z.size(), 4);
  std::vector<std::string> header{"step"};
  for (Eigen::Index i = 0; i < k; ++i) header.push_back("z" + std::to_string(i));
  header.push_back("log_density");
  header.push_back("step_size");
  std::vector<std::vector<double>> rows;
  for (const auto& r : trace) {
    std::vector<double> row{static_cast<double>(r.step)};
    for (Eigen::Index i = 0; i < k; ++i) row.push_back(r.z[i]);
    row.push_back(r.log_density);
    row.push_back(r.step_size);
    rows.push_back(std::move(row));
  }
  io::write_series_csv(path, header, rows);
}

}  // namespace gebm::samplers

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gebm/models/base_model.hpp"

namespace gebm::samplers {

using ad::Matrix;
using ad::ParamVector;
using ad::Vector;

/// Base plus energy plus inverse temperature. The posterior latent density
/// is proportional to eta(z) exp(-beta E(B(z))).
struct Gebm {
  models::BaseModel base;
  models::EnergyPtr energy;
  ParamVector psi;
  double A = 0.0;
  double beta = 1.0;

  Gebm with_beta(double b) const;
};

/// grad_z log eta(z) - beta grad_z E(B(z)), row-wise. beta = 0 skips the
/// energy pass entirely.
Matrix posterior_grad(const Gebm& g, const Matrix& z);

/// log eta(z) - beta E(B(z)), row-wise (unnormalized).
Vector log_unnormalized(const Gebm& g, const Matrix& z);

enum class SamplerKind { Ula, Kla };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::Kla;
  double step_size = 1e-4;
  double gamma = 100.0;
  double u = 1.0;
  int num_steps = 1000;
  /// step_size is multiplied by decay_factor every decay_every steps
  /// (decay_every = 0 disables the schedule).
  double decay_factor = 0.1;
  int decay_every = 200;
  /// Record chain 0 every trace_every steps (0 = no trace).
  int trace_every = 0;

  void validate() const;
  double step_size_at(int step) const;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);
std::string to_string(SamplerKind k);
SamplerKind sampler_kind(const std::string& name);

struct TraceRow {
  int step;
  Vector z;
  double log_density;
  double step_size;
};

/// Called after every completed step with the step count so far (1-based)
/// and the current positions/momenta (momenta empty for ULA), and once with
/// step 0 before the first update.
using Observer = std::function<void(int step, const Matrix& z, const Matrix& v)>;

struct ChainResult {
  Matrix z;
  Matrix x;
  std::vector<TraceRow> trace;
};

/// Initial latents for `n` chains: chain i draws from its own stream.
Matrix initial_latents(const Gebm& g, Eigen::Index n, std::uint64_t seed);

/// Z <- Z + lambda grad log nu(Z) + sqrt(2 lambda) W, all chains as rows.
ChainResult ula_chain(const Gebm& g, const SamplerConfig& config, Eigen::Index n_chains,
                      std::uint64_t seed, const Observer& observer = {});

/// Per step: Z += lambda/2 V; V += u lambda/2 grad; V <- e^{-gamma lambda} V
/// + sqrt(u (1 - e^{-2 gamma lambda})) W; V += u lambda/2 grad (same
/// gradient); Z += lambda/2 V. V starts at zero.
ChainResult kla_chain(const Gebm& g, const SamplerConfig& config, Eigen::Index n_chains,
                      std::uint64_t seed, const Observer& observer = {});

/// Runs `n` independent chains of the configured kind and returns B(Z_T).
Matrix sample_gebm(const Gebm& g, Eigen::Index n, const SamplerConfig& config, std::uint64_t seed);

/// For a 1-D GEBM: W1 between the pooled chain marginal B(Z_t) and `exact`
/// samples of the target at every checkpoint step t (t = 0 allowed).
std::vector<std::pair<int, double>> w1_decay_diagnostic(const Gebm& g, const SamplerConfig& config,
                                                        const std::vector<int>& checkpoints,
                                                        Eigen::Index n_chains,
                                                        const Vector& exact, std::uint64_t seed);

/// step,z0..z{k-1},log_density,step_size with k = min(latent dim, 4).
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace);

}  // namespace gebm::samplers

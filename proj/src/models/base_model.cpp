#include "gebm/models/base_model.hpp"

#include "gebm/error.hpp"

namespace gebm::models {

namespace {
constexpr Eigen::Index kChunk = 8192;
}

BaseModel::BaseModel(GaussianPrior prior, GeneratorPtr generator, ad::ParamVector theta)
    : prior_(std::move(prior)), generator_(std::move(generator)), theta_(std::move(theta)) {
  if (!generator_) throw ConfigError("base model needs a generator");
  if (generator_->latent_dim() != prior_.dim())
    throw DimensionError("prior dim " + std::to_string(prior_.dim()) +
                         " does not match generator latent dim " +
                         std::to_string(generator_->latent_dim()));
  if (!(theta_.layout() == *generator_->layout()))
    throw DimensionError("base parameters do not match the generator layout");
}

BaseModel BaseModel::with_params(ad::ParamVector theta) const {
  return BaseModel(prior_, generator_, std::move(theta));
}

LatentSample BaseModel::sample(Eigen::Index n, std::uint64_t seed) const {
  if (n < 1) throw ConfigError("base sample size must be >= 1");
  Rng rng(seed, 0);
  Matrix z = prior_.sample(n, rng);
  Matrix x = generate(z);
  return {std::move(z), std::move(x)};
}

Matrix BaseModel::generate(const Matrix& z) const {
  Matrix out(z.rows(), data_dim());
  for (Eigen::Index start = 0; start < z.rows(); start += kChunk) {
    const auto n = std::min(kChunk, z.rows() - start);
    ad::Tape tape;
    auto p = tape.bind(theta_, false);
    out.middleRows(start, n) = tape.value(generator_->apply(tape, p, tape.constant(z.middleRows(start, n))));
  }
  return out;
}

Vector BaseModel::neg_log_density(const Matrix& x) const {
  if (!has_density()) throw ConfigError("base model has no tractable density");
  Vector out(x.rows());
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const auto n = std::min(kChunk, x.rows() - start);
    ad::Tape tape;
    auto p = tape.bind(theta_, false);
    out.segment(start, n) = tape.value(generator_->neg_log_density(tape, p, tape.constant(x.middleRows(start, n))));
  }
  return out;
}

nlohmann::json base_descriptor(const BaseModel& base) {
  return {{"prior", base.prior()}, {"generator", base.generator().descriptor()}};
}

GeneratorPtr make_generator(const nlohmann::json& d) {
  const auto family = d.at("family").get<std::string>();
  if (family == "identity") return std::make_shared<IdentityGenerator>(d.at("dim").get<int>());
  if (family == "mlp") return std::make_shared<MlpGenerator>(d.at("mlp").get<MlpSpec>());
  if (family == "flow") return std::make_shared<FlowGenerator>(d.at("flow").get<RealNvpSpec>());
  throw ConfigError("unknown generator family '" + family + "'");
}

EnergyPtr make_energy(const nlohmann::json& d, const ad::ParamVector* theta) {
  const auto family = d.at("family").get<std::string>();
  if (family == "zero") return std::make_shared<ZeroEnergy>(d.at("dim").get<int>());
  if (family == "mlp") return std::make_shared<MlpEnergy>(d.at("mlp").get<MlpSpec>());
  if (family == "quadratic") return std::make_shared<QuadraticEnergy>(d.at("dim").get<int>());
  if (family == "flow") return std::make_shared<FlowEnergy>(d.at("flow").get<RealNvpSpec>());
  if (family == "flow_ratio") {
    if (!theta) throw ConfigError("flow_ratio energy needs the base parameters");
    return std::make_shared<FlowRatioEnergy>(d.at("flow").get<RealNvpSpec>(),
                                             d.at("base_flow").get<RealNvpSpec>(), *theta);
  }
  throw ConfigError("unknown energy family '" + family + "'");
}

}  // namespace gebm::models

#include "gebm/models/mlp.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "gebm/error.hpp"
#include "gebm/random.hpp"

namespace gebm::models {

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("MLP dims must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw ConfigError("MLP hidden dims must be >= 1");
}

void to_json(nlohmann::json& j, const MlpSpec& s) {
  j = {{"input_dim", s.input_dim},
       {"hidden_dims", s.hidden_dims},
       {"output_dim", s.output_dim},
       {"activation", s.activation == Activation::Tanh ? "tanh" : "leaky_relu"},
       {"seed", s.seed},
       {"zero_last_layer", s.zero_last_layer}};
}

void from_json(const nlohmann::json& j, MlpSpec& s) {
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  s.output_dim = j.at("output_dim").get<int>();
  const auto act = j.value("activation", std::string("tanh"));
  if (act == "tanh")
    s.activation = Activation::Tanh;
  else if (act == "leaky_relu")
    s.activation = Activation::LeakyRelu;
  else
    throw ConfigError("unknown activation " + act);
  s.seed = j.value("seed", std::uint64_t{0});
  s.zero_last_layer = j.value("zero_last_layer", false);
  s.validate();
}

Mlp::Mlp(MlpSpec spec, std::string prefix) : spec_(std::move(spec)), prefix_(std::move(prefix)) {
  spec_.validate();
}

std::string Mlp::weight_name(int layer) const { return prefix_ + ".l" + std::to_string(layer) + ".W"; }
std::string Mlp::bias_name(int layer) const { return prefix_ + ".l" + std::to_string(layer) + ".b"; }

std::pair<int, int> Mlp::layer_dims(int layer) const {
  const int in = layer == 0 ? spec_.input_dim : spec_.hidden_dims[static_cast<std::size_t>(layer - 1)];
  const int out = layer == num_layers() - 1 ? spec_.output_dim
                                            : spec_.hidden_dims[static_cast<std::size_t>(layer)];
  return {in, out};
}

void Mlp::declare(ad::ParamLayout& layout) const {
  for (int l = 0; l < num_layers(); ++l) {
    const auto [in, out] = layer_dims(l);
    layout.add(weight_name(l), in, out);
    layout.add(bias_name(l), 1, out);
  }
}

void Mlp::initialize(const ad::ParamLayout& layout, Vector& values) const {
  for (int l = 0; l < num_layers(); ++l) {
    const auto [in, out] = layer_dims(l);
    const auto& w = layout.block(weight_name(l));
    const auto& b = layout.block(bias_name(l));
    Eigen::Map<Matrix> wm(values.data() + w.offset, in, out);
    Eigen::Map<Matrix> bm(values.data() + b.offset, 1, out);
    bm.setZero();
    if (spec_.zero_last_layer && l == num_layers() - 1) {
      wm.setZero();
      continue;
    }
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    Rng rng(spec_.seed, static_cast<std::uint64_t>(l));
    for (int i = 0; i < in; ++i)
      for (int k = 0; k < out; ++k) wm(i, k) = rng.uniform(-a, a);
  }
}

ad::Var Mlp::apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const {
  if (x.cols() != spec_.input_dim)
    throw DimensionError(prefix_ + ": input has " + std::to_string(x.cols()) +
                         " columns, expected " + std::to_string(spec_.input_dim));
  (void)tape;
  ad::Var h = x;
  for (int l = 0; l < num_layers(); ++l) {
    h = ad::matmul(h, params[weight_name(l)]) + params[bias_name(l)];
    if (l + 1 < num_layers())
      h = spec_.activation == Activation::Tanh ? ad::tanh(h) : ad::leaky_relu(h, kLeakySlope);
  }
  return h;
}

double Mlp::lipschitz_bound(const ad::ParamVector& params) const {
  double bound = 1.0;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::JacobiSVD<Matrix> svd(Matrix(params.block(weight_name(l))));
    bound *= svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  }
  return bound;
}

}  // namespace gebm::models

#include "gebm/models/flow.hpp"

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "gebm/error.hpp"
#include "gebm/random.hpp"

namespace gebm::models {

void RealNvpSpec::validate() const {
  if (dim < 1) throw ConfigError("flow dim must be >= 1");
  if (num_layers < 0) throw ConfigError("flow num_layers must be >= 0");
  for (int h : hidden_dims)
    if (h < 1) throw ConfigError("flow hidden dims must be >= 1");
}

void to_json(nlohmann::json& j, const RealNvpSpec& s) {
  j = {{"dim", s.dim},
       {"num_layers", s.num_layers},
       {"hidden_dims", s.hidden_dims},
       {"activation", s.activation == Activation::Tanh ? "tanh" : "leaky_relu"},
       {"seed", s.seed},
       {"identity_init", s.identity_init}};
}

void from_json(const nlohmann::json& j, RealNvpSpec& s) {
  s.dim = j.at("dim").get<int>();
  s.num_layers = j.at("num_layers").get<int>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  const auto act = j.value("activation", std::string("tanh"));
  if (act == "tanh")
    s.activation = Activation::Tanh;
  else if (act == "leaky_relu")
    s.activation = Activation::LeakyRelu;
  else
    throw ConfigError("unknown activation " + act);
  s.seed = j.value("seed", std::uint64_t{0});
  s.identity_init = j.value("identity_init", true);
  s.validate();
}

RealNvpFlow::RealNvpFlow(RealNvpSpec spec, std::string prefix)
    : spec_(std::move(spec)), prefix_(std::move(prefix)) {
  spec_.validate();
  for (int l = 0; l < spec_.num_layers; ++l) {
    const std::string base = prefix_ + ".c" + std::to_string(l);
    auto make = [&](const char* which, std::uint64_t tag) {
      MlpSpec m;
      m.input_dim = spec_.dim;
      m.hidden_dims = spec_.hidden_dims;
      m.output_dim = spec_.dim;
      m.activation = spec_.activation;
      m.seed = derive_stream(spec_.seed, {static_cast<std::uint64_t>(l), tag});
      m.zero_last_layer = spec_.identity_init;
      return Mlp(m, base + "." + which);
    };
    scale_nets_.push_back(make("s", 0));
    shift_nets_.push_back(make("t", 1));
  }
}

Matrix RealNvpFlow::mask(int layer) const {
  Matrix m(1, spec_.dim);
  for (int j = 0; j < spec_.dim; ++j) m(0, j) = (j + layer) % 2 == 0 ? 1.0 : 0.0;
  return m;
}

void RealNvpFlow::declare(ad::ParamLayout& layout) const {
  for (int l = 0; l < spec_.num_layers; ++l) {
    scale_nets_[static_cast<std::size_t>(l)].declare(layout);
    shift_nets_[static_cast<std::size_t>(l)].declare(layout);
  }
}

void RealNvpFlow::initialize(const ad::ParamLayout& layout, Vector& values) const {
  for (int l = 0; l < spec_.num_layers; ++l) {
    scale_nets_[static_cast<std::size_t>(l)].initialize(layout, values);
    shift_nets_[static_cast<std::size_t>(l)].initialize(layout, values);
  }
}

std::pair<ad::Var, ad::Var> RealNvpFlow::shift_scale(ad::Tape& tape,
                                                     const ad::BoundParams& params, int layer,
                                                     ad::Var kept) const {
  const Matrix m = mask(layer);
  ad::Var free = tape.constant(Matrix((1.0 - m.array()).matrix()));
  const auto idx = static_cast<std::size_t>(layer);
  ad::Var s = kScaleBound * ad::tanh(scale_nets_[idx].apply(tape, params, kept)) * free;
  ad::Var t = shift_nets_[idx].apply(tape, params, kept) * free;
  return {s, t};
}

ad::Var RealNvpFlow::forward(ad::Tape& tape, const ad::BoundParams& params, ad::Var z,
                             ad::Var* log_det) const {
  if (z.cols() != spec_.dim) throw DimensionError(prefix_ + ": flow input dim mismatch");
  ad::Var x = z;
  ad::Var total;
  for (int l = 0; l < spec_.num_layers; ++l) {
    ad::Var kept = x * tape.constant(mask(l));
    auto [s, t] = shift_scale(tape, params, l, kept);
    x = x * ad::exp(s) + t;
    if (log_det) {
      ad::Var ld = ad::row_sum(s);
      total = total.valid() ? total + ld : ld;
    }
  }
  if (log_det) *log_det = total.valid() ? total : tape.constant(Matrix::Zero(z.rows(), 1));
  return x;
}

ad::Var RealNvpFlow::inverse(ad::Tape& tape, const ad::BoundParams& params, ad::Var x,
                             ad::Var* log_det) const {
  if (x.cols() != spec_.dim) throw DimensionError(prefix_ + ": flow input dim mismatch");
  ad::Var z = x;
  ad::Var total;
  for (int l = spec_.num_layers - 1; l >= 0; --l) {
    ad::Var kept = z * tape.constant(mask(l));
    auto [s, t] = shift_scale(tape, params, l, kept);
    z = (z - t) * ad::exp(-s);
    if (log_det) {
      ad::Var ld = -ad::row_sum(s);
      total = total.valid() ? total + ld : ld;
    }
  }
  if (log_det) *log_det = total.valid() ? total : tape.constant(Matrix::Zero(x.rows(), 1));
  return z;
}

ad::Var RealNvpFlow::neg_log_density(ad::Tape& tape, const ad::BoundParams& params,
                                     ad::Var x) const {
  ad::Var log_det;
  ad::Var z = inverse(tape, params, x, &log_det);
  const double log_norm = 0.5 * spec_.dim * std::log(2.0 * std::numbers::pi);
  return 0.5 * ad::row_sum(ad::square(z)) + log_norm - log_det;
}

Vector flow_neg_log_density(const RealNvpFlow& flow, const ad::ParamVector& params,
                            const Matrix& x) {
  ad::Tape tape;
  auto p = tape.bind(params, false);
  return tape.value(flow.neg_log_density(tape, p, tape.constant(x)));
}

Matrix flow_forward(const RealNvpFlow& flow, const ad::ParamVector& params, const Matrix& z) {
  ad::Tape tape;
  auto p = tape.bind(params, false);
  return tape.value(flow.forward(tape, p, tape.constant(z)));
}

Matrix flow_inverse(const RealNvpFlow& flow, const ad::ParamVector& params, const Matrix& x) {
  ad::Tape tape;
  auto p = tape.bind(params, false);
  return tape.value(flow.inverse(tape, p, tape.constant(x)));
}

}  // namespace gebm::models

#include "gebm/models/generator.hpp"

#include "gebm/error.hpp"

namespace gebm::models {

ad::Var Generator::neg_log_density(ad::Tape&, const ad::BoundParams&, ad::Var) const {
  throw ConfigError(family() + " generator has no tractable density");
}

IdentityGenerator::IdentityGenerator(int dim)
    : dim_(dim), layout_(std::make_shared<ad::ParamLayout>()) {
  if (dim < 1) throw ConfigError("generator dim must be >= 1");
}

ad::Var IdentityGenerator::apply(ad::Tape&, const ad::BoundParams&, ad::Var z) const {
  if (z.cols() != dim_) throw DimensionError("identity generator: latent dim mismatch");
  return z;
}

MlpGenerator::MlpGenerator(MlpSpec spec) : mlp_(spec, "base") {
  auto layout = std::make_shared<ad::ParamLayout>();
  mlp_.declare(*layout);
  layout_ = layout;
}

ad::ParamVector MlpGenerator::init_params() const {
  Vector v = Vector::Zero(layout_->total_size());
  mlp_.initialize(*layout_, v);
  return {layout_, v};
}

ad::Var MlpGenerator::apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var z) const {
  return mlp_.apply(tape, params, z);
}

FlowGenerator::FlowGenerator(RealNvpSpec spec) : flow_(spec, "base") {
  auto layout = std::make_shared<ad::ParamLayout>();
  flow_.declare(*layout);
  layout_ = layout;
}

ad::ParamVector FlowGenerator::init_params() const {
  Vector v = Vector::Zero(layout_->total_size());
  flow_.initialize(*layout_, v);
  return {layout_, v};
}

ad::Var FlowGenerator::apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var z) const {
  return flow_.forward(tape, params, z);
}

ad::Var FlowGenerator::neg_log_density(ad::Tape& tape, const ad::BoundParams& params,
                                       ad::Var x) const {
  return flow_.neg_log_density(tape, params, x);
}

}  // namespace gebm::models

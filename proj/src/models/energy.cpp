#include "gebm/models/energy.hpp"

#include "gebm/error.hpp"

namespace gebm::models {

namespace {

constexpr Eigen::Index kChunk = 8192;

void check_dim(const Energy& e, ad::Var x) {
  if (x.cols() != e.input_dim())
    throw DimensionError(e.family() + " energy: input has " + std::to_string(x.cols()) +
                         " columns, expected " + std::to_string(e.input_dim()));
}

}  // namespace

ZeroEnergy::ZeroEnergy(int dim) : dim_(dim), layout_(std::make_shared<ad::ParamLayout>()) {
  if (dim < 1) throw ConfigError("energy dim must be >= 1");
}

ad::ParamVector ZeroEnergy::init_params() const { return ad::ParamVector::zeros(layout_); }

ad::Var ZeroEnergy::apply(ad::Tape& tape, const ad::BoundParams&, ad::Var x) const {
  check_dim(*this, x);
  return tape.constant(Matrix::Zero(x.rows(), 1));
}

nlohmann::json ZeroEnergy::descriptor() const { return {{"family", "zero"}, {"dim", dim_}}; }

MlpEnergy::MlpEnergy(MlpSpec spec) : mlp_(spec, "energy") {
  if (spec.output_dim != 1) throw ConfigError("MLP energy must have output_dim 1");
  auto layout = std::make_shared<ad::ParamLayout>();
  mlp_.declare(*layout);
  layout_ = layout;
}

ad::ParamVector MlpEnergy::init_params() const {
  Vector v = Vector::Zero(layout_->total_size());
  mlp_.initialize(*layout_, v);
  return {layout_, v};
}

ad::Var MlpEnergy::apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const {
  check_dim(*this, x);
  return mlp_.apply(tape, params, x);
}

nlohmann::json MlpEnergy::descriptor() const {
  return {{"family", "mlp"}, {"mlp", mlp_.spec()}};
}

QuadraticEnergy::QuadraticEnergy(int dim) : dim_(dim) {
  if (dim < 1) throw ConfigError("energy dim must be >= 1");
  auto layout = std::make_shared<ad::ParamLayout>();
  layout->add("energy.a", 1, dim);
  layout->add("energy.b", 1, dim);
  layout->add("energy.c", 1, 1);
  layout_ = layout;
}

ad::ParamVector QuadraticEnergy::init_params() const { return ad::ParamVector::zeros(layout_); }

ad::ParamVector QuadraticEnergy::make_params(const Vector& a, const Vector& b, double c) const {
  if (a.size() != dim_ || b.size() != dim_) throw DimensionError("quadratic energy coefficients");
  Vector v(layout_->total_size());
  v << a, b, c;
  return {layout_, v};
}

ad::Var QuadraticEnergy::apply(ad::Tape&, const ad::BoundParams& params, ad::Var x) const {
  check_dim(*this, x);
  return ad::row_sum(ad::square(x) * params["energy.a"] + x * params["energy.b"]) +
         params["energy.c"];
}

nlohmann::json QuadraticEnergy::descriptor() const {
  return {{"family", "quadratic"}, {"dim", dim_}};
}

FlowEnergy::FlowEnergy(RealNvpSpec spec) : flow_(spec, "energy") {
  auto layout = std::make_shared<ad::ParamLayout>();
  flow_.declare(*layout);
  layout_ = layout;
}

ad::ParamVector FlowEnergy::init_params() const {
  Vector v = Vector::Zero(layout_->total_size());
  flow_.initialize(*layout_, v);
  return {layout_, v};
}

ad::Var FlowEnergy::apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const {
  check_dim(*this, x);
  return flow_.neg_log_density(tape, params, x);
}

nlohmann::json FlowEnergy::descriptor() const { return {{"family", "flow"}, {"flow", flow_.spec()}}; }

FlowRatioEnergy::FlowRatioEnergy(RealNvpSpec energy_flow, RealNvpSpec base_flow,
                                 ad::ParamVector theta)
    : h_(energy_flow, "energy"), r_(base_flow, "base"), theta_(std::move(theta)) {
  if (energy_flow.dim != base_flow.dim) throw DimensionError("flow_ratio: flow dims differ");
  auto layout = std::make_shared<ad::ParamLayout>();
  h_.declare(*layout);
  layout_ = layout;
  ad::ParamLayout base_layout;
  r_.declare(base_layout);
  if (!(base_layout == theta_.layout()))
    throw DimensionError("flow_ratio: base parameters do not match the base flow layout");
}

ad::ParamVector FlowRatioEnergy::init_params() const {
  Vector v = Vector::Zero(layout_->total_size());
  h_.initialize(*layout_, v);
  return {layout_, v};
}

ad::Var FlowRatioEnergy::apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const {
  check_dim(*this, x);
  auto base = tape.bind(theta_, false);
  return h_.neg_log_density(tape, params, x) - r_.neg_log_density(tape, base, x);
}

nlohmann::json FlowRatioEnergy::descriptor() const {
  return {{"family", "flow_ratio"}, {"flow", h_.spec()}, {"base_flow", r_.spec()}};
}

std::shared_ptr<const Energy> FlowRatioEnergy::rebased(const ad::ParamVector& theta) const {
  return std::make_shared<FlowRatioEnergy>(h_.spec(), r_.spec(), theta);
}

Vector energy_eval(const Energy& energy, const ad::ParamVector& psi, const Matrix& x) {
  Vector out(x.rows());
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const auto n = std::min(kChunk, x.rows() - start);
    ad::Tape tape;
    auto p = tape.bind(psi, false);
    out.segment(start, n) = tape.value(energy.apply(tape, p, tape.constant(x.middleRows(start, n))));
  }
  return out;
}

Matrix energy_input_grad(const Energy& energy, const ad::ParamVector& psi, const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const auto n = std::min(kChunk, x.rows() - start);
    ad::Tape tape;
    auto p = tape.bind(psi, false);
    ad::Var xv = tape.variable(x.middleRows(start, n));
    tape.backward(ad::sum(energy.apply(tape, p, xv)));
    out.middleRows(start, n) = tape.gradient(xv);
  }
  return out;
}

}  // namespace gebm::models

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "gebm/ad/functional.hpp"
#include "gebm/error.hpp"
#include "gebm/models/base_model.hpp"

using namespace gebm;
using namespace gebm::models;

namespace {

ad::ParamVector init(const Mlp& mlp) {
  auto layout = std::make_shared<ad::ParamLayout>();
  mlp.declare(*layout);
  Vector v = Vector::Zero(layout->total_size());
  mlp.initialize(*layout, v);
  return {layout, v};
}

Matrix eval_mlp(const Mlp& mlp, const ad::ParamVector& p, const Matrix& x) {
  ad::Tape t;
  auto bp = t.bind(p, false);
  return t.value(mlp.apply(t, bp, t.constant(x)));
}

RealNvpSpec random_flow(std::uint64_t seed) {
  RealNvpSpec s;
  s.dim = 2;
  s.num_layers = 4;
  s.hidden_dims = {16, 16};
  s.seed = seed;
  s.identity_init = false;
  return s;
}

}  // namespace

TEST_CASE("all-zero MLP outputs zero") {
  Mlp mlp({3, {4, 4}, 2, Activation::Tanh, 0}, "m");
  auto p = init(mlp);
  p = p.with_values(Vector::Zero(p.size()));
  Rng rng(1);
  CHECK(eval_mlp(mlp, p, rng.normal_matrix(5, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear energy value") {
  // One layer, no hidden units: E(x) = x . w + b with w = (1, 2), b = 0.
  MlpEnergy energy({2, {}, 1, Activation::Tanh, 0});
  auto psi = energy.init_params();
  Matrix w(2, 1);
  w << 1.0, 2.0;
  psi = psi.with_block("energy.l0.W", w).with_block("energy.l0.b", Matrix::Zero(1, 1));
  Matrix x(1, 2);
  x << 1.0, 2.0;
  CHECK(energy_eval(energy, psi, x)[0] == doctest::Approx(5.0));
}

TEST_CASE("glorot init respects its bound and zero biases") {
  Mlp mlp({10, {20}, 5, Activation::Tanh, 4}, "m");
  auto p = init(mlp);
  const double a0 = std::sqrt(6.0 / 30.0);
  CHECK(p.block(mlp.weight_name(0)).cwiseAbs().maxCoeff() <= a0);
  CHECK(p.block(mlp.weight_name(0)).cwiseAbs().maxCoeff() > 0.5 * a0);
  CHECK(p.block(mlp.bias_name(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(init(mlp).identical(p));
}

TEST_CASE("lipschitz bound holds along random segments") {
  Mlp mlp({2, {16, 16}, 1, Activation::Tanh, 6}, "m");
  auto p = init(mlp);
  const double bound = mlp.lipschitz_bound(p);
  Rng rng(2);
  Matrix a = rng.normal_matrix(200, 2), b = rng.normal_matrix(200, 2);
  Matrix fa = eval_mlp(mlp, p, a), fb = eval_mlp(mlp, p, b);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    CHECK(std::abs(fa(i, 0) - fb(i, 0)) <= bound * (a.row(i) - b.row(i)).norm() + 1e-12);
}

TEST_CASE("identity flow has the standard normal density") {
  RealNvpSpec spec;
  FlowEnergy h(spec);
  auto psi = h.init_params();
  Matrix x = Matrix::Zero(1, 2);
  CHECK(energy_eval(h, psi, x)[0] == doctest::Approx(std::log(2 * std::numbers::pi)).epsilon(1e-12));
  Matrix z = flow_forward(h.flow(), psi, Rng(3).normal_matrix(10, 2));
  CHECK((z - flow_inverse(h.flow(), psi, z)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("flow round trip and normalization") {
  RealNvpFlow flow(random_flow(9), "f");
  auto layout = std::make_shared<ad::ParamLayout>();
  flow.declare(*layout);
  Vector v = Vector::Zero(layout->total_size());
  flow.initialize(*layout, v);
  ad::ParamVector p(layout, v);

  Rng rng(5);
  Matrix z = rng.normal_matrix(64, 2);
  Matrix x = flow_forward(flow, p, z);
  CHECK((x - z).cwiseAbs().maxCoeff() > 1e-3);
  CHECK((flow_inverse(flow, p, x) - z).cwiseAbs().maxCoeff() < 1e-8);

  // Midpoint rule on [-8, 8]^2.
  const int n = 400;
  const double lo = -8.0, hi = 8.0, dx = (hi - lo) / n;
  Matrix grid(n * n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      grid(i * n + j, 0) = lo + (i + 0.5) * dx;
      grid(i * n + j, 1) = lo + (j + 0.5) * dx;
    }
  Vector r = flow_neg_log_density(flow, p, grid);
  const double integral = (-r.array()).exp().sum() * dx * dx;
  // Random flows put some mass outside the box; compare with the sampled
  // fraction that lands inside it.
  Matrix xs = flow_forward(flow, p, Rng(8).normal_matrix(200000, 2));
  double inside = 0;
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    if (xs.row(i).cwiseAbs().maxCoeff() < hi) inside += 1.0;
  inside /= static_cast<double>(xs.rows());
  CHECK(std::abs(integral - inside) < 0.01);

  // The identity-initialized flow keeps essentially all mass in the box.
  RealNvpSpec ident = random_flow(9);
  ident.identity_init = true;
  RealNvpFlow flat(ident, "f");
  Vector iv = Vector::Zero(layout->total_size());
  flat.initialize(*layout, iv);
  const double unit = (-flow_neg_log_density(flat, {layout, iv}, grid).array()).exp().sum() * dx * dx;
  CHECK(unit > 0.99);
  CHECK(unit < 1.01);
}

TEST_CASE("flow log-determinants agree between directions") {
  RealNvpFlow flow(random_flow(10), "f");
  auto layout = std::make_shared<ad::ParamLayout>();
  flow.declare(*layout);
  Vector v = Vector::Zero(layout->total_size());
  flow.initialize(*layout, v);
  ad::ParamVector p(layout, v);
  Matrix z = Rng(6).normal_matrix(8, 2);
  ad::Tape t;
  auto bp = t.bind(p, false);
  ad::Var ld_fwd, ld_inv;
  ad::Var x = flow.forward(t, bp, t.constant(z), &ld_fwd);
  flow.inverse(t, bp, x, &ld_inv);
  CHECK((t.value(ld_fwd) + t.value(ld_inv)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("flow ratio energy is h minus r") {
  auto hs = random_flow(1), rs = random_flow(2);
  FlowGenerator gen(rs);
  auto theta = gen.init_params();
  FlowRatioEnergy e(hs, rs, theta);
  FlowEnergy h(hs);
  auto psi = e.init_params();
  Matrix x = Rng(7).normal_matrix(20, 2);
  Vector expect = energy_eval(h, h.init_params(), x) - flow_neg_log_density(gen.flow(), theta, x);
  CHECK((energy_eval(e, psi, x) - expect).cwiseAbs().maxCoeff() < 1e-12);
  auto moved = e.rebased(theta.with_values(Vector::Zero(theta.size())));
  REQUIRE(moved);
  CHECK((energy_eval(*moved, psi, x) - energy_eval(e, psi, x)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("quadratic energy and input gradient") {
  QuadraticEnergy e(2);
  Vector a(2), b(2);
  a << 0.5, 1.0;
  b << -1.0, 2.0;
  auto psi = e.make_params(a, b, 0.25);
  Matrix x(1, 2);
  x << 2.0, -1.0;
  CHECK(energy_eval(e, psi, x)[0] == doctest::Approx(0.5 * 4 - 2 + 1 - 2 + 0.25));
  Matrix g = energy_input_grad(e, psi, x);
  CHECK(g(0, 0) == doctest::Approx(2 * 0.5 * 2 - 1));
  CHECK(g(0, 1) == doctest::Approx(2 * 1.0 * -1 + 2));
}

TEST_CASE("base sample moments and constant generator") {
  MlpGenerator gen({2, {}, 2, Activation::Tanh, 0});
  auto theta = gen.init_params();
  Matrix w(2, 2);
  w << 2.0, 0.0, 0.0, 0.5;
  Matrix bias(1, 2);
  bias << 1.0, -3.0;
  theta = theta.with_block("base.l0.W", w).with_block("base.l0.b", bias);
  BaseModel base(GaussianPrior(2), std::make_shared<MlpGenerator>(gen), theta);
  auto s = base.sample(100000, 1);
  Eigen::RowVectorXd m = s.x.colwise().mean();
  CHECK(m(0) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(m(1) == doctest::Approx(-3.0).epsilon(0.01));
  Eigen::RowVectorXd sd = ((s.x.rowwise() - m).array().square().colwise().mean()).sqrt();
  CHECK(sd(0) == doctest::Approx(2.0).epsilon(0.02));
  CHECK(sd(1) == doctest::Approx(0.5).epsilon(0.02));

  auto constant = base.with_params(theta.with_block("base.l0.W", Matrix::Zero(2, 2)));
  Matrix x = constant.sample(50, 2).x;
  CHECK((x.rowwise() - bias.row(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(base.sample(10, 3).x == base.sample(10, 3).x);
}

TEST_CASE("descriptors rebuild the same families") {
  FlowGenerator gen(random_flow(3));
  auto rebuilt = make_generator(gen.descriptor());
  CHECK(rebuilt->family() == "flow");
  CHECK(*rebuilt->layout() == *gen.layout());
  FlowRatioEnergy e(random_flow(4), random_flow(3), gen.init_params());
  auto theta = gen.init_params();
  auto e2 = make_energy(e.descriptor(), &theta);
  Matrix x = Rng(1).normal_matrix(5, 2);
  CHECK(energy_eval(*e2, e.init_params(), x) == energy_eval(e, e.init_params(), x));
  CHECK_THROWS_AS(make_energy({{"family", "nope"}}), ConfigError);
  CHECK_THROWS_AS(BaseModel(GaussianPrior(3), std::make_shared<FlowGenerator>(gen), theta),
                  DimensionError);
}

TEST_CASE("standard prior log density at the origin") {
  for (int q : {1, 3}) {
    GaussianPrior prior(q);
    const double ld = prior.log_density(Matrix::Zero(1, q))[0];
    CHECK(ld == doctest::Approx(-0.5 * q * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
  }
}

TEST_CASE("mlp energy on a flow generator matches finite differences") {
  FlowGenerator gen(random_flow(5));
  MlpEnergy energy({2, {8, 8}, 1, Activation::Tanh, 6});
  const auto theta = gen.init_params();
  const auto psi = energy.init_params();
  const Matrix z = Rng(8).normal_matrix(4, 2);
  ad::TapeFunction f = [&](ad::Tape& t, ad::Var in, const ad::BoundParams& bp) {
    auto bpsi = t.bind(psi, false);
    return ad::sum(energy.apply(t, bpsi, gen.apply(t, bp, in)));
  };
  const auto vg = ad::value_and_gradient(f, z, theta);

  auto by_theta = [&](const Vector& v) { return ad::forward(f, z, theta.with_values(v)); };
  // Error relative to the largest component: FD roundoff swamps the tiniest entries.
  auto scaled = [](const Vector& num, const Vector& g) {
    return (num - g).cwiseAbs().maxCoeff() / std::max(1.0, g.cwiseAbs().maxCoeff());
  };
  CHECK(scaled(ad::numeric_gradient(by_theta, theta.values(), 1e-6), vg.param_grad.values()) < 1e-5);

  auto by_z = [&](const Vector& v) {
    return ad::forward(f, Eigen::Map<const Matrix>(v.data(), z.rows(), z.cols()), theta);
  };
  const Vector zf = Eigen::Map<const Vector>(z.data(), z.size());
  const Vector gz = Eigen::Map<const Vector>(vg.input_grad.data(), vg.input_grad.size());
  CHECK(scaled(ad::numeric_gradient(by_z, zf, 1e-6), gz) < 1e-5);
}

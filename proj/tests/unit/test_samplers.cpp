#include <cmath>

#include "doctest.h"
#include "gebm/ad/functional.hpp"
#include "gebm/bench/metrics.hpp"
#include "gebm/error.hpp"
#include "gebm/samplers/langevin.hpp"

using namespace gebm;
using namespace gebm::samplers;
using models::Activation;

namespace {

// Identity generator with E(x) = sum_j a x_j^2 + b x_j.
Gebm quadratic_gebm(int dim, double a, double b, double beta = 1.0) {
  auto gen = std::make_shared<models::IdentityGenerator>(dim);
  models::BaseModel base(models::GaussianPrior(dim), gen, gen->init_params());
  auto e = std::make_shared<models::QuadraticEnergy>(dim);
  return {base, e, e->make_params(Vector::Constant(dim, a), Vector::Constant(dim, b), 0.0), 0.0, beta};
}

Gebm mlp_gebm(std::uint64_t seed) {
  auto gen = std::make_shared<models::MlpGenerator>(models::MlpSpec{2, {8}, 3, Activation::Tanh, seed});
  models::BaseModel base(models::GaussianPrior(2), gen, gen->init_params());
  auto e = std::make_shared<models::MlpEnergy>(models::MlpSpec{3, {8}, 1, Activation::Tanh, seed + 1});
  return {base, e, e->init_params(), 0.0, 1.0};
}

Matrix covariance(const Matrix& x) {
  const Matrix c = x.rowwise() - x.colwise().mean();
  return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

// Pools snapshots from the last `tail` steps every `every` steps.
struct Pool {
  int from, every;
  std::vector<Matrix> parts;
  void operator()(int step, const Matrix& z, const Matrix&) {
    if (step >= from && step % every == 0) parts.push_back(z);
  }
  Matrix all() const {
    Matrix out(static_cast<Eigen::Index>(parts.size()) * parts[0].rows(), parts[0].cols());
    for (std::size_t i = 0; i < parts.size(); ++i)
      out.middleRows(static_cast<Eigen::Index>(i) * parts[0].rows(), parts[0].rows()) = parts[i];
    return out;
  }
};

}  // namespace

TEST_CASE("posterior gradient closed forms") {
  Matrix z = Rng(1).normal_matrix(7, 2);
  auto g0 = quadratic_gebm(2, 0.5, 0.0, 0.0);
  CHECK((posterior_grad(g0, z) + z).cwiseAbs().maxCoeff() == 0.0);
  auto g1 = quadratic_gebm(1, 0.5, 0.0, 1.0);
  Matrix z1 = z.leftCols(1);
  CHECK((posterior_grad(g1, z1) + 2.0 * z1).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("posterior gradient matches finite differences of log nu") {
  auto g = mlp_gebm(3);
  Matrix z = Rng(2).normal_matrix(5, 2);
  Matrix grad = posterior_grad(g, z);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Vector zi = z.row(i).transpose();
    auto f = [&](const Vector& v) { return log_unnormalized(g, v.transpose())[0]; };
    CHECK(ad::finite_diff_check(f, zi, grad.row(i).transpose(), 1e-5) < 1e-5);
  }
  // Additivity in beta.
  Matrix e0 = posterior_grad(g.with_beta(0.0), z);
  Matrix e1 = posterior_grad(g.with_beta(1.0), z) - e0;
  Matrix e3 = posterior_grad(g.with_beta(3.0), z) - e0;
  CHECK((e3 - 3.0 * e1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero step size leaves chains at their initial state") {
  auto g = mlp_gebm(4);
  SamplerConfig c;
  c.kind = SamplerKind::Ula;
  c.step_size = 0.0;
  c.num_steps = 20;
  auto r = ula_chain(g, c, 16, 9);
  CHECK(r.z == initial_latents(g, 16, 9));
  c.num_steps = 0;
  c.kind = SamplerKind::Kla;
  CHECK(sample_gebm(g, 16, c, 9) == g.base.generate(initial_latents(g, 16, 9)));
}

TEST_CASE("samplers are deterministic and chains do not depend on the batch size") {
  auto g = mlp_gebm(5);
  SamplerConfig c;
  c.step_size = 1e-2;
  c.num_steps = 50;
  c.decay_every = 0;
  for (auto kind : {SamplerKind::Ula, SamplerKind::Kla}) {
    c.kind = kind;
    Matrix a = sample_gebm(g, 8, c, 3), b = sample_gebm(g, 8, c, 3);
    CHECK(a == b);
    Matrix more = sample_gebm(g, 12, c, 3);
    CHECK(more.topRows(8) == a);
    CHECK(sample_gebm(g, 8, c, 4) != a);
  }
}

TEST_CASE("OU factor limit refreshes momentum") {
  // gamma * lambda huge: e^{-gamma lambda} = 0 and the kick is sqrt(u).
  auto g = quadratic_gebm(1, 0.0, 0.0, 0.0);
  SamplerConfig c;
  c.gamma = 1e9;
  c.step_size = 1e-3;
  c.num_steps = 1;
  c.decay_every = 0;
  Matrix v_after;
  kla_chain(g, c, 4, 1, [&](int step, const Matrix&, const Matrix& v) { if (step == 1) v_after = v; });
  // Starting from V = 0 the first half drift is a no-op, so V = W + (lambda/2) * score(Z0).
  const Matrix z0 = initial_latents(g, 4, 1);
  Rng r0(1, 0);
  CHECK(v_after(0, 0) == doctest::Approx(r0.normal() - 0.5e-3 * z0(0, 0)).epsilon(1e-12));
}

TEST_CASE("ULA targets the prior at beta 0 and the product Gaussian at beta 1") {
  SamplerConfig c;
  c.kind = SamplerKind::Ula;
  c.step_size = 1e-2;
  c.num_steps = 2000;
  c.decay_every = 0;
  Pool p0{1000, 50, {}};
  ula_chain(quadratic_gebm(2, 0.5, 0.0, 0.0), c, 1000, 11, std::ref(p0));
  Matrix c0 = covariance(p0.all());
  CHECK((c0 - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.1);

  Pool p1{1000, 50, {}};
  ula_chain(quadratic_gebm(2, 0.5, 0.0, 1.0), c, 1000, 12, std::ref(p1));
  Matrix c1 = covariance(p1.all());
  CHECK((c1 - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("KLA stationary law with zero energy covers positions and momenta") {
  SamplerConfig c;
  c.gamma = 1.0;
  c.u = 1.0;
  c.step_size = 0.05;
  c.num_steps = 1500;
  c.decay_every = 0;
  std::vector<Matrix> parts;
  kla_chain(quadratic_gebm(1, 0.0, 0.0, 0.0), c, 2000, 13, [&](int step, const Matrix& z, const Matrix& v) {
    if (step >= 1000 && step % 100 == 0) {
      Matrix zv(z.rows(), 2);
      zv << z, v;
      parts.push_back(zv);
    }
  });
  Matrix all(static_cast<Eigen::Index>(parts.size()) * 2000, 2);
  for (std::size_t i = 0; i < parts.size(); ++i) all.middleRows(static_cast<Eigen::Index>(i) * 2000, 2000) = parts[i];
  CHECK((covariance(all) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("ULA and KLA agree on the quadratic posterior") {
  auto g = quadratic_gebm(1, 0.5, -2.0, 1.0);  // nu = N(1, 1/2)
  SamplerConfig c;
  c.step_size = 1e-2;
  c.num_steps = 3000;
  c.decay_every = 0;
  c.gamma = 2.0;
  Pool pk{2000, 100, {}}, pu{2000, 100, {}};
  kla_chain(g, c, 1000, 14, std::ref(pk));
  c.kind = SamplerKind::Ula;
  ula_chain(g, c, 1000, 15, std::ref(pu));
  Matrix a = pk.all(), b = pu.all();
  CHECK(a.mean() == doctest::Approx(1.0).epsilon(0.03));
  CHECK(b.mean() == doctest::Approx(1.0).epsilon(0.03));
  CHECK(covariance(a)(0, 0) == doctest::Approx(covariance(b)(0, 0)).epsilon(0.08));
}

TEST_CASE("constant generator makes every sample equal") {
  auto gen = std::make_shared<models::MlpGenerator>(models::MlpSpec{2, {}, 2, Activation::Tanh, 0});
  Matrix bias(1, 2);
  bias << 0.25, -4.0;
  auto theta = gen->init_params().with_block("base.l0.W", Matrix::Zero(2, 2)).with_block("base.l0.b", bias);
  auto e = std::make_shared<models::MlpEnergy>(models::MlpSpec{2, {4}, 1, Activation::Tanh, 1});
  Gebm g{models::BaseModel(models::GaussianPrior(2), gen, theta), e, e->init_params(), 0.0, 1.0};
  SamplerConfig c;
  c.num_steps = 30;
  Matrix x = sample_gebm(g, 10, c, 2);
  CHECK((x.rowwise() - bias.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("W1 decay diagnostic") {
  auto g = quadratic_gebm(1, 0.5, -2.0, 1.0);
  Vector exact = (Rng(77).normal_matrix(200000, 1).array() * std::sqrt(0.5) + 1.0).matrix().col(0);
  SamplerConfig c;
  c.step_size = 1e-2;
  c.gamma = 2.0;
  c.decay_every = 0;
  auto series = w1_decay_diagnostic(g, c, {0, 200, 2000}, 4000, exact, 5);
  REQUIRE(series.size() == 3);
  const Matrix z0 = initial_latents(g, 4000, 5);
  CHECK(series[0].second == doctest::Approx(bench::w1_1d(z0.col(0), exact)).epsilon(1e-12));
  CHECK(series[0].second > 0.5);
  CHECK(series[2].second < 0.5 * series[1].second);

  Vector other = (Rng(78).normal_matrix(200000, 1).array() * std::sqrt(0.5) + 1.0).matrix().col(0);
  CHECK(bench::w1_1d(other, exact) < 0.01);
}

TEST_CASE("trace rows and config parsing") {
  auto g = mlp_gebm(6);
  SamplerConfig c;
  c.num_steps = 10;
  c.trace_every = 5;
  auto r = kla_chain(g, c, 3, 1);
  REQUIRE(r.trace.size() == 3);
  CHECK(r.trace[2].step == 10);
  CHECK(r.trace[2].z == r.z.row(0).transpose());
  CHECK(r.trace[1].step_size == doctest::Approx(1e-4));
  c.num_steps = 400;
  CHECK(c.step_size_at(399) == doctest::Approx(1e-5));

  nlohmann::json j = {{"sampler", "ula"}, {"steps", 5}};
  auto parsed = j.get<SamplerConfig>();
  CHECK(parsed.kind == SamplerKind::Ula);
  CHECK(parsed.num_steps == 5);
  CHECK_THROWS_AS((nlohmann::json{{"sampler", "hmc"}}.get<SamplerConfig>()), ConfigError);
  CHECK_THROWS_AS((nlohmann::json{{"bogus", 1}}.get<SamplerConfig>()), ConfigError);
}

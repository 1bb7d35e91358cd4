#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gebm/ad/functional.hpp"
#include "gebm/error.hpp"
#include "gebm/kale/kale.hpp"

using namespace gebm;
using namespace gebm::kale;
using models::Activation;

namespace {

// KL(N(m1, v1) || N(m2, v2)) written out independently of the library.
double kl_gauss(double m1, double v1, double m2, double v2) {
  return 0.5 * (v1 / v2 + (m2 - m1) * (m2 - m1) / v2 - 1.0 + std::log(v2 / v1));
}

Matrix gauss(Eigen::Index n, int d, double mean, double sd, std::uint64_t seed) {
  return (Rng(seed).normal_matrix(n, d).array() * sd + mean).matrix();
}

std::shared_ptr<models::MlpEnergy> mlp_energy(int d, std::vector<int> hidden, std::uint64_t seed) {
  return std::make_shared<models::MlpEnergy>(models::MlpSpec{d, std::move(hidden), 1, Activation::Tanh, seed});
}

double rel_norm_error(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

double golden_max(const std::function<double(double)>& f, double lo, double hi) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  for (int i = 0; i < 200; ++i) {
    if (f(c) > f(d)) b = d; else a = c;
    c = b - r * (b - a);
    d = a + r * (b - a);
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("dv estimate of trivial energies") {
  Matrix x = gauss(50, 2, 0.0, 1.0, 1), y = gauss(70, 2, 1.0, 1.0, 2);
  models::ZeroEnergy zero(2);
  CHECK(dv_estimate(zero, zero.init_params(), x, y) == 0.0);
  models::QuadraticEnergy q(2);
  auto c = q.make_params(Vector::Zero(2), Vector::Zero(2), 3.7);
  CHECK(std::abs(dv_estimate(q, c, x, y)) < 1e-14);
  CHECK_THROWS_AS(dv_estimate(zero, zero.init_params(), Matrix(0, 2), y), ConfigError);
}

TEST_CASE("dv estimate with the exact log-ratio reaches the Gaussian KL") {
  // P = N(0,1), B = N(0,2): log(dP/dB) = -x^2/4 + const, so E = x^2/4.
  models::QuadraticEnergy q(1);
  auto psi = q.make_params(Vector::Constant(1, 0.25), Vector::Zero(1), 0.0);
  const Eigen::Index n = 100000;
  Matrix x = gauss(n, 1, 0.0, 1.0, 3), y = gauss(n, 1, 0.0, std::sqrt(2.0), 4);
  const double kl = kl_gauss(0, 1, 0, 2);
  CHECK(kl == doctest::Approx(0.0965736).epsilon(1e-6));
  const double est = dv_estimate(q, psi, x, y);
  CHECK(std::abs(est - kl) < 3.0 * dv_stderr(q, psi, x, y));
}

TEST_CASE("dv shift invariance and f majorization") {
  auto e = mlp_energy(2, {8}, 5);
  auto psi = e->init_params();
  Matrix x = gauss(40, 2, 0.3, 1.0, 6), y = gauss(60, 2, -0.2, 1.2, 7);
  const double dv = dv_estimate(*e, psi, x, y);
  auto shifted = psi.with_block("energy.l1.b", psi.block("energy.l1.b").array() + 2.5);
  CHECK(dv_estimate(*e, shifted, x, y) == doctest::Approx(dv).epsilon(1e-13));

  const double a_tilde = empirical_log_partition(*e, psi, y);
  CHECK(f_objective(*e, psi, a_tilde, x, y) == doctest::Approx(dv).epsilon(1e-13));
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const double A = a_tilde + rng.uniform(-3.0, 3.0);
    CHECK(f_objective(*e, psi, A, x, y) <= dv + 1e-14);
  }
  const double best = golden_max([&](double A) { return f_objective(*e, psi, A, x, y); },
                                 a_tilde - 5.0, a_tilde + 5.0);
  CHECK(best == doctest::Approx(a_tilde).epsilon(1e-6));
  CHECK(f_objective(*e, psi, best, x, y) == doctest::Approx(dv).epsilon(1e-12));

  models::ZeroEnergy zero(2);
  CHECK(f_objective(zero, zero.init_params(), 0.0, x, y) == 0.0);
  CHECK_THROWS_AS(f_objective(zero, zero.init_params(), -800.0, x, y), DomainError);
}

TEST_CASE("amortized A update arithmetic") {
  CHECK(amortized_A_update(1.25, 1.25, 0.3) == 1.25);
  CHECK(amortized_A_update(0.7 + std::numbers::ln2, 0.7, 1.0) ==
        doctest::Approx(0.7 + std::numbers::ln2 - 1.0).epsilon(1e-15));
  CHECK_THROWS_AS(amortized_A_update(1.0, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(amortized_A_update(1000.0, 0.0, 0.1), DomainError);

  models::QuadraticEnergy q(1);
  auto psi = q.make_params(Vector::Constant(1, 0.3), Vector::Constant(1, -0.4), 0.1);
  Matrix y = gauss(30, 1, 0.0, 1.0, 8);
  const double first = amortized_A_update(std::nullopt, y, q, psi, 0.1);
  CHECK(first == empirical_log_partition(q, psi, y));
}

TEST_CASE("amortized A converges to the exact log-partition on a finite support") {
  // Base uniform over four atoms; a batch containing every atom once is
  // exhaustive, so the fixed point is the enumerated log-partition.
  models::QuadraticEnergy q(1);
  auto psi = q.make_params(Vector::Constant(1, 0.5), Vector::Constant(1, 1.0), -0.2);
  Matrix atoms(4, 1);
  atoms << -1.5, -0.2, 0.4, 2.0;
  double z = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double t = atoms(i, 0);
    z += std::exp(-(0.5 * t * t + t - 0.2)) / 4.0;
  }
  double A = 3.0;
  for (int i = 0; i < 400; ++i) A = amortized_A_update(A, atoms, q, psi, 0.1);
  CHECK(A == doctest::Approx(std::log(z)).epsilon(1e-12));
}

TEST_CASE("regularizer values") {
  models::QuadraticEnergy q(3);
  Matrix probe = gauss(10, 3, 0, 1, 9);
  CHECK(regularizer(q, q.init_params(), probe) == 0.0);

  // No hidden layers: E(x) = x.w + b; the input gradient is w everywhere.
  auto lin = mlp_energy(3, {}, 1);
  Matrix w(3, 1);
  w << 0.5, -1.0, 2.0;
  auto psi = lin->init_params().with_block("energy.l0.W", w).with_block("energy.l0.b", Matrix::Zero(1, 1));
  const double wn = w.squaredNorm();
  CHECK(regularizer(*lin, psi, probe) == doctest::Approx(wn / 4.0 + wn).epsilon(1e-14));
  RegularizerConfig only_penalty;
  only_penalty.l2_enabled = false;
  CHECK(regularizer(*lin, psi, probe, only_penalty) == doctest::Approx(wn).epsilon(1e-14));

  // Penalty through central differences of E in x.
  auto e = mlp_energy(2, {16, 16}, 2);
  auto p2 = e->init_params();
  Matrix pr = gauss(12, 2, 0, 1, 10);
  double penalty = 0.0;
  for (Eigen::Index i = 0; i < pr.rows(); ++i) {
    Vector g = ad::numeric_gradient(
        [&](const Vector& v) { return models::energy_eval(*e, p2, v.transpose())[0]; },
        pr.row(i).transpose(), 1e-5);
    penalty += g.squaredNorm() / static_cast<double>(pr.rows());
  }
  CHECK(std::abs(regularizer(*e, p2, pr, only_penalty) - penalty) / penalty < 1e-5);
}

TEST_CASE("regularizer gradient matches finite differences in psi") {
  auto e = mlp_energy(2, {8, 8}, 3);
  auto psi = e->init_params();
  Matrix pr = gauss(16, 2, 0, 1, 11);
  Vector analytic = regularizer_grad(*e, psi, pr).values();
  Vector fd = ad::numeric_gradient(
      [&](const Vector& v) { return regularizer(*e, psi.with_values(v), pr); }, psi.values(), 1e-5);
  CHECK(rel_norm_error(analytic, fd) < 1e-5);
}

TEST_CASE("energy loss gradient") {
  auto e = mlp_energy(2, {8, 8}, 4);
  EnergyState st{e->init_params(), 0.3};
  Matrix x = gauss(20, 2, 0.5, 1, 12), y = gauss(30, 2, 0, 1, 13);
  RegularizerConfig none;
  auto g = energy_loss_grad(*e, st, x, y, none);
  CHECK(g.objective == doctest::Approx(f_objective(*e, st.psi, st.A, x, y)).epsilon(1e-14));
  Vector fd = -ad::numeric_gradient(
      [&](const Vector& v) { return f_objective(*e, st.psi.with_values(v), st.A, x, y); },
      st.psi.values(), 1e-5);
  CHECK(ad::finite_diff_check(
            [&](const Vector& v) { return -f_objective(*e, st.psi.with_values(v), st.A, x, y); },
            st.psi.values(), g.g_psi.values(), 1e-5) < 1e-5);
  CHECK(g.g_A == doctest::Approx(std::exp(st.A - g.A_tilde) - 1.0));

  RegularizerConfig r1, r2;
  r1.weight = 0.1;
  r2.weight = 0.2;
  auto g1 = energy_loss_grad(*e, st, x, y, r1);
  auto g2 = energy_loss_grad(*e, st, x, y, r2);
  Vector d1 = g1.g_psi.values() - g.g_psi.values();
  Vector d2 = g2.g_psi.values() - g.g_psi.values();
  CHECK((d2 - 2.0 * d1).cwiseAbs().maxCoeff() < 1e-12 * d1.cwiseAbs().maxCoeff() + 1e-15);

  // Zero energy with equal batch statistics: A = A~ = 0, so g_A = 0.
  models::ZeroEnergy zero(2);
  auto gz = energy_loss_grad(zero, {zero.init_params(), 0.0}, x, y, none);
  CHECK(gz.g_A == 0.0);
}

TEST_CASE("base gradient") {
  // Constant energy: no x dependence, zero gradient.
  models::QuadraticEnergy q(2);
  auto cpsi = q.make_params(Vector::Zero(2), Vector::Zero(2), 1.5);
  auto gen = std::make_shared<models::MlpGenerator>(models::MlpSpec{2, {8}, 2, Activation::Tanh, 1});
  models::BaseModel base(models::GaussianPrior(2), gen, gen->init_params());
  Matrix z = Rng(3).normal_matrix(64, 2);
  CHECK(base_gradient(base, q, cpsi, z).grad.values().cwiseAbs().maxCoeff() == 0.0);

  // Thm-style formula check: matches finite differences of the frozen DV objective.
  auto e = mlp_energy(2, {8}, 7);
  auto psi = e->init_params();
  Matrix x = gauss(40, 2, 0.5, 1, 14);
  auto frozen = [&](const Vector& th) {
    return dv_estimate(*e, psi, x, base.with_params(base.theta().with_values(th)).generate(z));
  };
  auto bg = base_gradient(base, *e, psi, z);
  Vector fd = ad::numeric_gradient(frozen, base.theta().values(), 1e-5);
  // DV = -mean E(X) - logsumexp(-E(B(Z))) + ln M, so d DV/d theta = grad.
  CHECK(ad::finite_diff_check(frozen, base.theta().values(), bg.grad.values(), 1e-5) < 1e-3);
  CHECK(bg.log_partition == doctest::Approx(empirical_log_partition(*e, psi, base.generate(z))));
}

TEST_CASE("base gradient in the 1-D linear case") {
  // B(z) = theta z, E(x) = x, eta = N(0,1): d/dtheta[-log E exp(-theta z)] = -theta.
  auto gen = std::make_shared<models::MlpGenerator>(models::MlpSpec{1, {}, 1, Activation::Tanh, 0});
  auto theta = gen->init_params().with_block("base.l0.W", Matrix::Constant(1, 1, 1.0))
                   .with_block("base.l0.b", Matrix::Zero(1, 1));
  models::BaseModel base(models::GaussianPrior(1), gen, theta);
  models::QuadraticEnergy lin(1);
  auto psi = lin.make_params(Vector::Zero(1), Vector::Constant(1, 1.0), 0.0);
  const Eigen::Index m = 1000000;
  Matrix z = Rng(15).normal_matrix(m, 1);
  const double g = base_gradient(base, lin, psi, z).grad.block("base.l0.W")(0, 0);
  // Self-normalized estimate sum(z w)/sum(w), w = exp(-z); delta-method stderr.
  const Vector w = (-z.col(0).array()).exp().matrix();
  const double mw = w.mean();
  const double mu = z.col(0).dot(w) / w.sum();
  const double se = std::sqrt(((z.col(0).array() - mu) * w.array()).square().mean() / m) / mw;
  CHECK(std::abs(g - (-1.0)) < 3.0 * se);
}

TEST_CASE("kale estimates") {
  Matrix x = gauss(2000, 1, 0.0, 1.0, 21);
  KaleConfig cfg;
  cfg.steps = 1500;
  cfg.lr = 2e-3;
  cfg.reg.weight = 0.1;
  cfg.seed = 3;

  SUBCASE("zero family") {
    auto est = kale::kale(x, gauss(500, 1, 1.0, 1.0, 22), std::make_shared<models::ZeroEnergy>(1), cfg);
    CHECK(est.value == 0.0);
  }
  SUBCASE("identical samples") {
    auto est = kale::kale(x, x, mlp_energy(1, {32, 32}, 1), cfg);
    CHECK(std::abs(est.value) <= 0.05);
    CHECK(est.trace.size() == 1500);
  }
  SUBCASE("mean-shifted Gaussians") {
    Matrix y = gauss(2000, 1, 1.0, 1.0, 23);
    auto est = kale::kale(x, y, mlp_energy(1, {32, 32}, 2), cfg);
    CHECK(est.value >= 0.3);
    CHECK(est.value <= 0.55);
    CHECK(est.value == doctest::Approx(dv_estimate(*mlp_energy(1, {32, 32}, 2), est.state.psi, x, y)).epsilon(1e-12));
  }
}

TEST_CASE("kale with the exact family approaches KL as samples grow") {
  models::QuadraticEnergy fam(1);
  auto e = std::make_shared<models::QuadraticEnergy>(1);
  const double kl = kl_gauss(0, 1, 0, 2);
  std::vector<double> errs;
  for (Eigen::Index n : {500, 5000, 50000}) {
    std::vector<double> per_seed;
    for (std::uint64_t s = 0; s < 3; ++s) {
      Matrix x = gauss(n, 1, 0, 1, 100 + s), y = gauss(n, 1, 0, std::sqrt(2.0), 200 + s);
      KaleConfig cfg;
      cfg.steps = 400;
      cfg.batch_x = n;
      cfg.batch_y = n;
      cfg.lr = 0.02;
      cfg.lr_A = 0.5;
      per_seed.push_back(std::abs(kale::kale(x, y, e, cfg).value - kl));
    }
    std::sort(per_seed.begin(), per_seed.end());
    errs.push_back(per_seed[1]);
  }
  CHECK(errs[1] < errs[0]);
  CHECK(errs[2] < errs[1]);
}

TEST_CASE("kale config json rejects unknown keys") {
  nlohmann::json j = {{"steps", 10}, {"regularizer", {{"weight", 0.5}}}};
  auto c = j.get<KaleConfig>();
  CHECK(c.steps == 10);
  CHECK(c.reg.weight == 0.5);
  nlohmann::json back = c;
  CHECK(back.get<KaleConfig>().reg.weight == 0.5);
  CHECK_THROWS_AS((nlohmann::json{{"stepz", 1}}.get<KaleConfig>()), ConfigError);
}

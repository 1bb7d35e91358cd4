#include "gebm/models/prior.hpp"

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "gebm/error.hpp"

namespace gebm::models {

GaussianPrior::GaussianPrior(int dim) : GaussianPrior(Vector::Zero(dim), Vector::Ones(dim)) {}

GaussianPrior::GaussianPrior(Vector mean, Vector stdev)
    : mean_(std::move(mean)), stdev_(std::move(stdev)) {
  if (mean_.size() < 1) throw ConfigError("prior dim must be >= 1");
  if (mean_.size() != stdev_.size()) throw DimensionError("prior mean/stdev length mismatch");
  if ((stdev_.array() <= 0.0).any()) throw ConfigError("prior stdevs must be > 0");
}

bool GaussianPrior::is_standard() const {
  return (mean_.array() == 0.0).all() && (stdev_.array() == 1.0).all();
}

Vector GaussianPrior::log_density(const Matrix& z) const {
  if (z.cols() != dim()) throw DimensionError("prior log_density: dim mismatch");
  const double log_norm =
      -0.5 * dim() * std::log(2.0 * std::numbers::pi) - stdev_.array().log().sum();
  const Matrix u = (z.rowwise() - mean_.transpose()).array().rowwise() / stdev_.transpose().array();
  return (log_norm - 0.5 * u.rowwise().squaredNorm().array()).matrix();
}

Matrix GaussianPrior::score(const Matrix& z) const {
  if (z.cols() != dim()) throw DimensionError("prior score: dim mismatch");
  return -((z.rowwise() - mean_.transpose()).array().rowwise() /
           stdev_.transpose().array().square())
              .matrix();
}

Matrix GaussianPrior::sample(Eigen::Index n, Rng& rng) const {
  Matrix z = rng.normal_matrix(n, dim());
  return ((z.array().rowwise() * stdev_.transpose().array()).rowwise() + mean_.transpose().array())
      .matrix();
}

void to_json(nlohmann::json& j, const GaussianPrior& p) {
  j = {{"dim", p.dim()},
       {"mean", std::vector<double>(p.mean().data(), p.mean().data() + p.dim())},
       {"stdev", std::vector<double>(p.stdev().data(), p.stdev().data() + p.dim())}};
}

void from_json(const nlohmann::json& j, GaussianPrior& p) {
  const int dim = j.at("dim").get<int>();
  Vector mean = Vector::Zero(dim), stdev = Vector::Ones(dim);
  if (j.contains("mean")) {
    auto m = j.at("mean").get<std::vector<double>>();
    if (static_cast<int>(m.size()) != dim) throw ConfigError("prior mean length mismatch");
    mean = Eigen::Map<Vector>(m.data(), dim);
  }
  if (j.contains("stdev")) {
    auto s = j.at("stdev").get<std::vector<double>>();
    if (static_cast<int>(s.size()) != dim) throw ConfigError("prior stdev length mismatch");
    stdev = Eigen::Map<Vector>(s.data(), dim);
  }
  p = GaussianPrior(mean, stdev);
}

}  // namespace gebm::models

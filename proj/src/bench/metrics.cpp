#include "gebm/bench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gebm/error.hpp"
#include "gebm/random.hpp"

namespace gebm::bench {

double gaussian_kl(double mu1, double var1, double mu2, double var2) {
  if (!(var1 > 0.0 && var2 > 0.0)) throw ConfigError("variances must be positive");
  return 0.5 * (var1 / var2 + (mu2 - mu1) * (mu2 - mu1) / var2 - 1.0 + std::log(var2 / var1));
}

double gaussian_kl(const Eigen::VectorXd& mu1, const Eigen::VectorXd& var1,
                   const Eigen::VectorXd& mu2, const Eigen::VectorXd& var2) {
  if (mu1.size() != var1.size() || mu1.size() != mu2.size() || mu1.size() != var2.size())
    throw DimensionError("gaussian_kl: parameter lengths differ");
  double total = 0.0;
  for (Eigen::Index i = 0; i < mu1.size(); ++i) total += gaussian_kl(mu1[i], var1[i], mu2[i], var2[i]);
  return total;
}

double w1_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() == 0 || y.size() == 0) throw ConfigError("w1_1d needs nonempty samples");
  std::vector<double> a(x.data(), x.data() + x.size());
  std::vector<double> b(y.data(), y.data() + y.size());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() > b.size()) std::swap(a, b);
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // Order statistic of b at the same quantile (i + 0.5) / n.
    const auto j = std::min(m - 1, static_cast<std::size_t>((static_cast<double>(i) + 0.5) *
                                                            static_cast<double>(m) /
                                                            static_cast<double>(n)));
    total += std::abs(a[i] - b[j]);
  }
  return total / static_cast<double>(n);
}

double mmd_median_bandwidth(const Matrix& x, const Matrix& y) {
  const Eigen::Index take_x = std::min<Eigen::Index>(x.rows(), 500);
  const Eigen::Index take_y = std::min<Eigen::Index>(y.rows(), 500);
  Matrix pool(take_x + take_y, x.cols());
  pool << x.topRows(take_x), y.topRows(take_y);
  std::vector<double> d;
  for (Eigen::Index i = 0; i < pool.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pool.rows(); ++j) d.push_back((pool.row(i) - pool.row(j)).norm());
  std::nth_element(d.begin(), d.begin() + static_cast<long>(d.size() / 2), d.end());
  const double med = d[d.size() / 2];
  if (!(med > 0.0)) return 1.0;
  return med;
}

namespace {

// Unbiased statistic from the pooled Gram matrix; g marks the first group.
double mmd_from_gram(const Matrix& k, const Eigen::VectorXd& g) {
  const Eigen::VectorXd h = Eigen::VectorXd::Ones(g.size()) - g;
  const Eigen::VectorXd kg = k * g;
  const Eigen::VectorXd kh = k * h;
  const Eigen::VectorXd d = k.diagonal();
  const double n = g.sum();
  const double m = h.sum();
  const double sxx = g.dot(kg) - g.dot(d);
  const double syy = h.dot(kh) - h.dot(d);
  const double sxy = g.dot(kh);
  return sxx / (n * (n - 1.0)) + syy / (m * (m - 1.0)) - 2.0 * sxy / (n * m);
}

}  // namespace

MmdResult mmd2(const Matrix& x, const Matrix& y, double bandwidth, int permutations,
               std::uint64_t seed) {
  if (x.rows() < 20 || y.rows() < 20) throw ConfigError("mmd2 needs at least 20 rows per batch");
  if (x.cols() != y.cols()) throw DimensionError("mmd2: batch widths differ");
  if (permutations < 1) throw ConfigError("mmd2 needs at least one permutation");
  MmdResult r;
  r.bandwidth = bandwidth > 0.0 ? bandwidth : mmd_median_bandwidth(x, y);
  const Eigen::Index n = x.rows();
  const Eigen::Index total = n + y.rows();
  Matrix pool(total, x.cols());
  pool << x, y;
  Matrix k(total, total);
  const double scale = 1.0 / (2.0 * r.bandwidth * r.bandwidth);
  for (Eigen::Index j = 0; j < total; ++j)
    k.col(j) = (-(pool.rowwise() - pool.row(j)).rowwise().squaredNorm().array() * scale).exp().matrix();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  auto indicator = [&] {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(total);
    for (Eigen::Index a = 0; a < n; ++a) g[order[static_cast<std::size_t>(a)]] = 1.0;
    return g;
  };
  r.value = mmd_from_gram(k, indicator());

  Rng rng(seed, 0x6d6d64);
  int exceed = 0;
  double s = 0.0, s2 = 0.0;
  for (int p = 0; p < permutations; ++p) {
    std::shuffle(order.begin(), order.end(), rng);
    const double v = mmd_from_gram(k, indicator());
    exceed += v >= r.value ? 1 : 0;
    s += v;
    s2 += v * v;
  }
  const double mean = s / permutations;
  r.null_stderr = std::sqrt(std::max(0.0, s2 / permutations - mean * mean));
  r.p_value = (1.0 + exceed) / (1.0 + permutations);
  return r;
}

}  // namespace gebm::bench

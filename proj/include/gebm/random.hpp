#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

#include <Eigen/Dense>

namespace gebm {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Mixes a seed with a path of integers into a 64-bit stream identifier.
std::uint64_t derive_stream(std::uint64_t base, std::initializer_list<std::uint64_t> path);

/// Counter-based generator: the key is the seed, the upper half of the
/// counter is a stream id, the lower half counts blocks. Two generators with
/// the same (seed, stream) produce identical sequences; distinct streams are
/// independent, which is how parallel chains get their noise.
///
/// Satisfies UniformRandomBitGenerator so it plugs into <random> and
/// std::shuffle.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on (0, 1], safe for log.
  double uniform_pos();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gebm

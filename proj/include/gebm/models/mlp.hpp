#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gebm/ad/tape.hpp"

namespace gebm::models {

using ad::Matrix;
using ad::Vector;

enum class Activation { Tanh, LeakyRelu };

/// Slope of the leaky-relu activation.
inline constexpr double kLeakySlope = 0.2;

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  int output_dim = 1;
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;
  /// Zero the last layer's weights (used for identity-initialized flows).
  bool zero_last_layer = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const MlpSpec& s);
void from_json(const nlohmann::json& j, MlpSpec& s);

/// Fully connected network y = act(... act(x W0 + b0) ...) W_L + b_L.
/// Weights are (fan_in x fan_out), rows of x are samples.
class Mlp {
 public:
  Mlp(MlpSpec spec, std::string prefix);

  const MlpSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }
  int num_layers() const { return static_cast<int>(spec_.hidden_dims.size()) + 1; }
  std::string weight_name(int layer) const;
  std::string bias_name(int layer) const;

  void declare(ad::ParamLayout& layout) const;
  /// Glorot-uniform weights a = sqrt(6/(fan_in+fan_out)) from MlpSpec::seed,
  /// zero biases. Writes into `values` at this network's block offsets.
  void initialize(const ad::ParamLayout& layout, Vector& values) const;

  ad::Var apply(ad::Tape& tape, const ad::BoundParams& params, ad::Var x) const;

  /// Product of layer spectral norms: a Lipschitz bound when the activation
  /// is 1-Lipschitz.
  double lipschitz_bound(const ad::ParamVector& params) const;

 private:
  std::pair<int, int> layer_dims(int layer) const;

  MlpSpec spec_;
  std::string prefix_;
};

}  // namespace gebm::models

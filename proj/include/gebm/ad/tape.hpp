#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gebm/ad/param_vector.hpp"

namespace gebm::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  int index = -1;

  bool valid() const { return tape != nullptr && index >= 0; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// The tape leaves created for one ParamVector.
class BoundParams {
 public:
  BoundParams() = default;
  BoundParams(const ParamVector* params, std::vector<Var> leaves, bool trainable)
      : params_(params), leaves_(std::move(leaves)), trainable_(trainable) {}

  Var operator[](std::string_view name) const;
  Var at(std::size_t index) const { return leaves_.at(index); }
  const ParamVector& params() const { return *params_; }
  const std::vector<Var>& leaves() const { return leaves_; }
  bool trainable() const { return trainable_; }

 private:
  const ParamVector* params_ = nullptr;
  std::vector<Var> leaves_;
  bool trainable_ = true;
};

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  Shift,
  MatMul,
  Tanh,
  Exp,
  Log,
  Square,
  Sqrt,
  Abs,
  Max,
  LeakyRelu,
  Sum,
  Mean,
  RowSum,
  LogSumExp,
  Cols,
  HCat,
  VCat,
};

/// Define-by-run reverse-mode tape over dense float-64 matrices.
///
/// Rows are the batch axis by convention. Binary elementwise ops broadcast
/// a 1x1, 1xC (row) or Rx1 (column) operand against an RxC one. The tape is
/// rebuilt for every evaluation; nodes are appended in topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var variable(Matrix value);
  /// Non-differentiable input.
  Var constant(Matrix value);
  Var constant(double value);

  /// Creates one leaf per block. With `trainable` false the leaves are
  /// constants and no parameter gradient flows to them.
  BoundParams bind(const ParamVector& params, bool trainable = true);

  const Matrix& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.index)).value; }
  double scalar(Var v) const;

  /// Reverse sweep from a 1x1 root. Clears adjoints from any previous sweep.
  void backward(Var root);
  /// Adjoint of `v` after backward (zeros if `v` does not reach the root).
  Matrix gradient(Var v) const;
  /// Parameter gradient with the same layout as the bound vector.
  ParamVector gradient(const BoundParams& params) const;

  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.index)).grad; }

  // Node constructors used by the free operator functions below.
  Var push(Op op, Matrix value, int a, int b = -1, double c = 0.0, Eigen::Index i0 = 0,
           Eigen::Index i1 = 0);
  void check_finite(const Matrix& m, std::string_view what) const;

 private:
  struct Node {
    Op op;
    int a;
    int b;
    double c;
    Eigen::Index i0;
    Eigen::Index i1;
    bool grad;
    Matrix value;
  };

  std::vector<Node> nodes_;
  std::vector<Matrix> adjoints_;
  bool has_adjoints_ = false;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);

Var matmul(Var a, Var b);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);
Var abs(Var a);
Var maximum(Var a, Var b);
Var leaky_relu(Var a, double slope);
/// Sum of all elements (1x1).
Var sum(Var a);
/// Mean of all elements (1x1).
Var mean(Var a);
/// Per-row sum (Rx1).
Var row_sum(Var a);
/// Max-shifted log(sum(exp(a))) over all elements (1x1).
Var logsumexp(Var a);
/// Columns [start, start+count).
Var cols(Var a, Eigen::Index start, Eigen::Index count);
Var hcat(Var a, Var b);
Var vcat(Var a, Var b);

}  // namespace gebm::ad

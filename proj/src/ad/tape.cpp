#include "gebm/ad/tape.hpp"

#include <cmath>
#include <string>

#include "gebm/error.hpp"

namespace gebm::ad {

namespace {

Eigen::Index broadcast_dim(Eigen::Index x, Eigen::Index y) {
  if (x == y) return x;
  if (x == 1) return y;
  if (y == 1) return x;
  return -1;
}

// Returns `m` itself when no broadcasting is needed, otherwise a replicated
// copy held in `storage`.
const Matrix& expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols, Matrix& storage) {
  if (m.rows() == rows && m.cols() == cols) return m;
  storage = m.replicate(rows / m.rows(), cols / m.cols());
  return storage;
}

Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix out = g;
  if (rows == 1 && out.rows() != 1) out = out.colwise().sum().eval();
  if (cols == 1 && out.cols() != 1) out = out.rowwise().sum().eval();
  return out;
}

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("operation on an invalid Var");
  if (a.tape != b.tape) throw std::invalid_argument("operands live on different tapes");
  return *a.tape;
}

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename F>
Var binary(Op op, Var a, Var b, F&& f) {
  Tape& t = same_tape(a, b);
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  const auto r = broadcast_dim(va.rows(), vb.rows());
  const auto c = broadcast_dim(va.cols(), vb.cols());
  if (r < 0 || c < 0)
    throw DimensionError("cannot broadcast " + shape_str(va) + " with " + shape_str(vb) +
                         " at node " + std::to_string(t.size()));
  Matrix sa, sb;
  Matrix out = f(expand(va, r, c, sa), expand(vb, r, c, sb));
  return t.push(op, std::move(out), a.index, b.index);
}

}  // namespace

const Matrix& Var::value() const { return tape->value(*this); }

Var BoundParams::operator[](std::string_view name) const {
  return leaves_.at(params_->layout().index_of(name));
}

Var Tape::push(Op op, Matrix value, int a, int b, double c, Eigen::Index i0, Eigen::Index i1) {
  bool grad = false;
  if (op == Op::Leaf) {
    grad = c != 0.0;
  } else {
    if (a >= 0) grad = grad || nodes_[static_cast<std::size_t>(a)].grad;
    if (b >= 0) grad = grad || nodes_[static_cast<std::size_t>(b)].grad;
  }
  nodes_.push_back(Node{op, a, b, c, i0, i1, grad, std::move(value)});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::check_finite(const Matrix& m, std::string_view what) const {
  if (!m.allFinite())
    throw DomainError(std::string(what) + " produced a non-finite value at node " +
                          std::to_string(nodes_.size()),
                      static_cast<long>(nodes_.size()));
}

Var Tape::variable(Matrix value) { return push(Op::Leaf, std::move(value), -1, -1, 1.0); }

Var Tape::constant(Matrix value) { return push(Op::Leaf, std::move(value), -1, -1, 0.0); }

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

BoundParams Tape::bind(const ParamVector& params, bool trainable) {
  std::vector<Var> leaves;
  leaves.reserve(params.layout().blocks().size());
  for (std::size_t i = 0; i < params.layout().blocks().size(); ++i) {
    Matrix v = params.block(i);
    leaves.push_back(trainable ? variable(std::move(v)) : constant(std::move(v)));
  }
  return BoundParams(&params, std::move(leaves), trainable);
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1)
    throw DimensionError("scalar() on a " + shape_str(m) + " node");
  return m(0, 0);
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("root belongs to another tape");
  const Matrix& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1)
    throw DimensionError("backward() needs a 1x1 root, got " + shape_str(rv));
  adjoints_.assign(nodes_.size(), Matrix());
  has_adjoints_ = true;
  adjoints_[static_cast<std::size_t>(root.index)] = Matrix::Ones(1, 1);

  auto accumulate = [this](int idx, const Matrix& g) {
    auto& n = nodes_[static_cast<std::size_t>(idx)];
    if (!n.grad) return;
    auto& adj = adjoints_[static_cast<std::size_t>(idx)];
    const bool same = g.rows() == n.value.rows() && g.cols() == n.value.cols();
    if (adj.size() == 0)
      adj = same ? g : reduce_to(g, n.value.rows(), n.value.cols());
    else if (same)
      adj += g;
    else
      adj += reduce_to(g, n.value.rows(), n.value.cols());
  };

  for (int i = root.index; i >= 0; --i) {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    const Matrix& g = adjoints_[static_cast<std::size_t>(i)];
    if (!n.grad || g.size() == 0 || n.op == Op::Leaf) continue;
    const Matrix* va = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)].value : nullptr;
    const Matrix* vb = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)].value : nullptr;
    const auto r = n.value.rows();
    const auto c = n.value.cols();
    Matrix sa, sb;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::Sub:
        accumulate(n.a, g);
        accumulate(n.b, -g);
        break;
      case Op::Mul:
        if (nodes_[static_cast<std::size_t>(n.a)].grad)
          accumulate(n.a, g.cwiseProduct(expand(*vb, r, c, sb)));
        if (nodes_[static_cast<std::size_t>(n.b)].grad)
          accumulate(n.b, g.cwiseProduct(expand(*va, r, c, sa)));
        break;
      case Op::Div: {
        const Matrix& eb = expand(*vb, r, c, sb);
        accumulate(n.a, g.cwiseQuotient(eb));
        accumulate(n.b, -g.cwiseProduct(n.value).cwiseQuotient(eb));
        break;
      }
      case Op::Neg:
        accumulate(n.a, -g);
        break;
      case Op::Scale:
        accumulate(n.a, n.c * g);
        break;
      case Op::Shift:
        accumulate(n.a, g);
        break;
      case Op::MatMul:
        if (nodes_[static_cast<std::size_t>(n.a)].grad) accumulate(n.a, g * vb->transpose());
        if (nodes_[static_cast<std::size_t>(n.b)].grad) accumulate(n.b, va->transpose() * g);
        break;
      case Op::Tanh:
        accumulate(n.a, g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
      case Op::Exp:
        accumulate(n.a, g.cwiseProduct(n.value));
        break;
      case Op::Log:
        accumulate(n.a, g.cwiseQuotient(*va));
        break;
      case Op::Square:
        accumulate(n.a, 2.0 * g.cwiseProduct(*va));
        break;
      case Op::Sqrt:
        accumulate(n.a, (0.5 * g.array() / n.value.array()).matrix());
        break;
      case Op::Abs:
        accumulate(n.a, g.cwiseProduct(va->unaryExpr([](double x) {
          return static_cast<double>((x > 0.0) - (x < 0.0));
        })));
        break;
      case Op::Max: {
        const Matrix& ea = expand(*va, r, c, sa);
        const Matrix& eb = expand(*vb, r, c, sb);
        const Matrix pick_a = (ea.array() >= eb.array()).cast<double>().matrix();
        accumulate(n.a, g.cwiseProduct(pick_a));
        accumulate(n.b, g.cwiseProduct((1.0 - pick_a.array()).matrix()));
        break;
      }
      case Op::LeakyRelu: {
        const double slope = n.c;
        accumulate(n.a, g.cwiseProduct(va->unaryExpr([slope](double x) {
          return x > 0.0 ? 1.0 : slope;
        })));
        break;
      }
      case Op::Sum:
        accumulate(n.a, Matrix::Constant(va->rows(), va->cols(), g(0, 0)));
        break;
      case Op::Mean:
        accumulate(n.a, Matrix::Constant(va->rows(), va->cols(),
                                         g(0, 0) / static_cast<double>(va->size())));
        break;
      case Op::RowSum:
        accumulate(n.a, g.replicate(1, va->cols()));
        break;
      case Op::LogSumExp:
        accumulate(n.a, g(0, 0) * (va->array() - n.value(0, 0)).exp().matrix());
        break;
      case Op::Cols: {
        Matrix full = Matrix::Zero(va->rows(), va->cols());
        full.middleCols(n.i0, n.i1) = g;
        accumulate(n.a, full);
        break;
      }
      case Op::HCat:
        accumulate(n.a, g.leftCols(va->cols()));
        accumulate(n.b, g.rightCols(vb->cols()));
        break;
      case Op::VCat:
        accumulate(n.a, g.topRows(va->rows()));
        accumulate(n.b, g.bottomRows(vb->rows()));
        break;
    }
  }
}

Matrix Tape::gradient(Var v) const {
  const auto& n = nodes_.at(static_cast<std::size_t>(v.index));
  if (has_adjoints_) {
    const Matrix& adj = adjoints_[static_cast<std::size_t>(v.index)];
    if (adj.size() != 0) return adj;
  }
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

ParamVector Tape::gradient(const BoundParams& params) const {
  Vector flat = Vector::Zero(params.params().size());
  const auto& blocks = params.params().layout().blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Matrix g = gradient(params.at(i));
    Eigen::Map<Matrix>(flat.data() + blocks[i].offset, blocks[i].rows, blocks[i].cols) = g;
  }
  return params.params().with_values(std::move(flat));
}

Var operator+(Var a, Var b) {
  // Row-vector bias: avoid materializing the replicated operand.
  if (a.valid() && b.valid() && a.tape == b.tape && b.rows() == 1 && a.rows() > 1 &&
      a.cols() == b.cols())
    return a.tape->push(Op::Add, a.value().rowwise() + b.value().row(0), a.index, b.index);
  return binary(Op::Add, a, b, [](const Matrix& x, const Matrix& y) { return Matrix(x + y); });
}

Var operator-(Var a, Var b) {
  return binary(Op::Sub, a, b, [](const Matrix& x, const Matrix& y) { return Matrix(x - y); });
}

Var operator*(Var a, Var b) {
  return binary(Op::Mul, a, b,
                [](const Matrix& x, const Matrix& y) { return Matrix(x.cwiseProduct(y)); });
}

Var operator/(Var a, Var b) {
  return binary(Op::Div, a, b, [&](const Matrix& x, const Matrix& y) {
    if ((y.array() == 0.0).any())
      throw DomainError("division by zero at node " + std::to_string(a.tape->size()),
                        static_cast<long>(a.tape->size()));
    return Matrix(x.cwiseQuotient(y));
  });
}

Var operator-(Var a) { return a.tape->push(Op::Neg, -a.value(), a.index); }

Var operator+(Var a, double c) {
  return a.tape->push(Op::Shift, (a.value().array() + c).matrix(), a.index, -1, c);
}
Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a + (-c); }
Var operator-(double c, Var a) { return (-a) + c; }

Var operator*(Var a, double c) { return a.tape->push(Op::Scale, c * a.value(), a.index, -1, c); }
Var operator*(double c, Var a) { return a * c; }
Var operator/(Var a, double c) {
  if (c == 0.0) throw DomainError("division by zero constant", static_cast<long>(a.tape->size()));
  return a * (1.0 / c);
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  if (va.cols() != vb.rows())
    throw DimensionError("matmul " + shape_str(va) + " by " + shape_str(vb) + " at node " +
                         std::to_string(t.size()));
  return t.push(Op::MatMul, va * vb, a.index, b.index);
}

Var tanh(Var a) {
  // Odd-symmetric form over exp(-2|x|): vectorizes well and cannot overflow.
  const auto v = a.value().array();
  const Eigen::ArrayXXd e = (-2.0 * v.abs()).exp();
  Matrix out = ((1.0 - e) / (1.0 + e) * v.sign()).matrix();
  return a.tape->push(Op::Tanh, std::move(out), a.index);
}

Var exp(Var a) {
  Matrix out = a.value().array().exp().matrix();
  if (a.value().allFinite()) a.tape->check_finite(out, "exp");
  return a.tape->push(Op::Exp, std::move(out), a.index);
}

Var log(Var a) {
  const Matrix& v = a.value();
  if ((v.array() <= 0.0).any())
    throw DomainError("log of a non-positive value at node " + std::to_string(a.tape->size()),
                      static_cast<long>(a.tape->size()));
  return a.tape->push(Op::Log, v.array().log().matrix(), a.index);
}

Var square(Var a) { return a.tape->push(Op::Square, a.value().array().square().matrix(), a.index); }

Var sqrt(Var a) {
  const Matrix& v = a.value();
  if ((v.array() < 0.0).any())
    throw DomainError("sqrt of a negative value at node " + std::to_string(a.tape->size()),
                      static_cast<long>(a.tape->size()));
  return a.tape->push(Op::Sqrt, v.array().sqrt().matrix(), a.index);
}

Var abs(Var a) { return a.tape->push(Op::Abs, a.value().cwiseAbs(), a.index); }

Var maximum(Var a, Var b) {
  return binary(Op::Max, a, b,
                [](const Matrix& x, const Matrix& y) { return Matrix(x.cwiseMax(y)); });
}

Var leaky_relu(Var a, double slope) {
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return a.tape->push(Op::LeakyRelu, std::move(out), a.index, -1, slope);
}

Var sum(Var a) { return a.tape->push(Op::Sum, Matrix::Constant(1, 1, a.value().sum()), a.index); }

Var mean(Var a) {
  if (a.value().size() == 0) throw DimensionError("mean of an empty matrix");
  return a.tape->push(Op::Mean, Matrix::Constant(1, 1, a.value().mean()), a.index);
}

Var row_sum(Var a) { return a.tape->push(Op::RowSum, a.value().rowwise().sum(), a.index); }

Var logsumexp(Var a) {
  const Matrix& v = a.value();
  if (v.size() == 0) throw DimensionError("logsumexp of an empty matrix");
  const double m = v.maxCoeff();
  double out;
  if (std::isinf(m) && m < 0)
    out = m;
  else
    out = m + std::log((v.array() - m).exp().sum());
  if (!std::isfinite(out) && v.allFinite())
    throw DomainError("logsumexp produced a non-finite value at node " +
                          std::to_string(a.tape->size()),
                      static_cast<long>(a.tape->size()));
  return a.tape->push(Op::LogSumExp, Matrix::Constant(1, 1, out), a.index);
}

Var cols(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& v = a.value();
  if (start < 0 || count < 0 || start + count > v.cols())
    throw DimensionError("column slice out of range for " + shape_str(v));
  return a.tape->push(Op::Cols, v.middleCols(start, count), a.index, -1, 0.0, start, count);
}

Var hcat(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  if (va.rows() != vb.rows()) throw DimensionError("hcat row mismatch");
  Matrix out(va.rows(), va.cols() + vb.cols());
  out << va, vb;
  return t.push(Op::HCat, std::move(out), a.index, b.index);
}

Var vcat(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  if (va.cols() != vb.cols()) throw DimensionError("vcat column mismatch");
  Matrix out(va.rows() + vb.rows(), va.cols());
  out << va, vb;
  return t.push(Op::VCat, std::move(out), a.index, b.index);
}

}  // namespace gebm::ad

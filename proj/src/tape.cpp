#include "pinnflow/tape.hpp"

#include <cassert>
#include <stdexcept>

namespace pinnflow::ad {

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    assert(in.tape() == this);
    needs = needs || nodes_[in.id()].requires_grad;
  }
  Node node{std::move(value), Matrix(), needs, false, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Matrix& adjoint) { accumulate_expr(v, adjoint); }

void Tape::backward(const Var& output) {
  if (swept_) throw std::logic_error("Tape::backward called twice");
  swept_ = true;
  Node& out = nodes_[output.id()];
  if (out.value.size() != 1) throw std::logic_error("Tape::backward needs a 1x1 output");
  if (!out.requires_grad) return;
  out.grad = Matrix::Ones(1, 1);
  out.has_grad = true;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, node.grad);
  }
}

Matrix Tape::gradient(const Var& v) const {
  const Node& node = nodes_[v.id()];
  if (!node.has_grad) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [a, b, ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate_expr(a, g * tp.value(ib).transpose());
    if (tp.requires_grad(b)) tp.accumulate_expr(b, tp.value(ia).transpose() * g);
  });
}

Var add_bias(const Var& x, const Var& bias) {
  Tape& t = *x.tape();
  Matrix out = x.value().colwise() + bias.value().col(0);
  return t.record(std::move(out), {x, bias}, [x, bias](Tape& tp, const Matrix& g) {
    tp.accumulate(x, g);
    if (tp.requires_grad(bias)) tp.accumulate_expr(bias, g.rowwise().sum());
  });
}

Var tanh(const Var& x) {
  Tape& t = *x.tape();
  Matrix out = x.value().array().tanh().matrix();
  const std::size_t self = t.size();
  return t.record(std::move(out), {x}, [x, self](Tape& tp, const Matrix& g) {
    const auto y = tp.value(self).array();
    tp.accumulate_expr(x, (g.array() * (1.0 - y.square())).matrix());
  });
}

Var row(const Var& x, Eigen::Index i) {
  Tape& t = *x.tape();
  Matrix out = x.value().row(i);
  const Eigen::Index rows = x.rows();
  return t.record(std::move(out), {x}, [x, i, rows](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(rows, g.cols());
    full.row(i) = g;
    tp.accumulate(x, full);
  });
}

Var sum(const Var& x) {
  Tape& t = *x.tape();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  const Eigen::Index r = x.rows(), c = x.cols();
  return t.record(std::move(out), {x}, [x, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(x, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var sum_squares(const Var& x) {
  Tape& t = *x.tape();
  Matrix out(1, 1);
  out(0, 0) = x.value().squaredNorm();
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [x, ix](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(x, (2.0 * g(0, 0)) * tp.value(ix));
  });
}

Var square(const Var& x) {
  Tape& t = *x.tape();
  Matrix out = x.value().array().square().matrix();
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [x, ix](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(x, (2.0 * g.array() * tp.value(ix).array()).matrix());
  });
}

Var operator+(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  Matrix out = a.value() + b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  Matrix out = a.value() - b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate_expr(b, -g);
  });
}

Var operator*(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseProduct(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [a, b, ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate_expr(a, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(b)) tp.accumulate_expr(b, g.cwiseProduct(tp.value(ia)));
  });
}

Var operator-(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = -a.value();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate_expr(a, -g); });
}

Var operator*(double s, const Var& a) {
  Tape& t = *a.tape();
  Matrix out = s * a.value();
  return t.record(std::move(out), {a}, [a, s](Tape& tp, const Matrix& g) { tp.accumulate_expr(a, s * g); });
}

Var operator*(const Var& a, double s) { return s * a; }

Var operator+(const Var& a, double s) {
  Tape& t = *a.tape();
  Matrix out = (a.value().array() + s).matrix();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }

Var operator-(double s, const Var& a) {
  Tape& t = *a.tape();
  Matrix out = (s - a.value().array()).matrix();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate_expr(a, -g); });
}

}  // namespace pinnflow::ad

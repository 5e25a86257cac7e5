#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records eagerly evaluated matrix operations. Values are computed as
// soon as an operation is called; calling backward() on a 1x1 result
// propagates adjoints to every node that transitively depends on a variable
// leaf. Nodes built only from constants record no backward closure, so the
// same code path serves gradient-free evaluation.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

namespace pinnflow::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Closure invoked during backward() with the node's accumulated adjoint.
  using Backward = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Matrix value);
  Var constant(Matrix value);

  /// Runs the reverse sweep from a 1x1 output. May be called once per tape.
  void backward(const Var& output);

  /// Adjoint of a node after backward(); a zero matrix if the node was not
  /// reached.
  Matrix gradient(const Var& v) const;

  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  void accumulate(const Var& v, const Matrix& adjoint);

  template <class Expr>
  void accumulate_expr(const Var& v, const Expr& adjoint) {
    Node& node = nodes_[v.id()];
    if (!node.requires_grad) return;
    if (node.has_grad) {
      node.grad += adjoint;
    } else {
      node.grad = adjoint;
      node.has_grad = true;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  std::vector<Node> nodes_;
  bool swept_ = false;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

// Elementwise and linear-algebra operations. Binary operands must live on
// the same tape and have matching shapes unless stated otherwise.
Var matmul(const Var& a, const Var& b);
/// x (r x n) plus a column vector b (r x 1) broadcast over columns.
Var add_bias(const Var& x, const Var& bias);
Var tanh(const Var& x);
/// Row i of x as a 1 x n matrix.
Var row(const Var& x, Eigen::Index i);
/// Sum of all entries as a 1x1 matrix.
Var sum(const Var& x);
/// Sum of squared entries as a 1x1 matrix.
Var sum_squares(const Var& x);
Var square(const Var& x);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);

}  // namespace pinnflow::ad

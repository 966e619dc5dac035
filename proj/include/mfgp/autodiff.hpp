#pragma once

// Matrix-valued reverse-mode automatic differentiation.
//
// Every node on a Tape holds a dense Eigen matrix (scalars are 1x1). Operations
// append nodes and register a closure that pushes the node's adjoint to its
// parents. Only nodes reachable from a variable carry a closure, so evaluating
// an expression on constants costs the forward pass alone.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace mfgp::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  double scalar() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Index size() const { return value().size(); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Receives the node's adjoint and its forward value.
  using Backward =
      std::function<void(Tape&, const Matrix& adjoint, const Matrix& value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  Var variable(Matrix value);

  // Seeds d(output)/d(output) = 1 and propagates adjoints to every variable.
  void backward(const Var& output);

  // Adjoint of `v` after backward(); zeros if nothing flowed into it.
  Matrix gradient(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

  // Used by operation implementations.
  Var push(Matrix value, bool requires_grad, Backward backward);
  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  template <typename Expr>
  void accumulate(int id, const Expr& adjoint) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = adjoint;
      n.has_grad = true;
    } else {
      n.grad += adjoint;
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
};

// Elementwise arithmetic (shapes must agree).
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var operator+(const Var& a, double s);
Var cwise_mul(const Var& a, const Var& b);
Var cwise_div(const Var& a, const Var& b);

// Broadcasting by a 1x1 node.
Var scale(const Var& m, const Var& s);
Var add_scalar(const Var& m, const Var& s);
// diag(v) * m and m * diag(v).
Var scale_rows(const Var& m, const Var& v);
Var scale_cols(const Var& m, const Var& v);

Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var reciprocal(const Var& a);
// sqrt(max(a, 0)); the derivative is taken as 0 where a <= 0.
Var sqrt_clamped(const Var& a);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// out(i, j) = p(i) - q(j) for column vectors p, q.
Var outer_diff(const Var& p, const Var& q);

Var sum(const Var& a);
Var col_sums(const Var& a);  // 1 x cols
Var row_sums(const Var& a);  // rows x 1

Var col(const Var& m, Index k);
Var gather_rows(const Var& m, const IndexList& rows);
Var gather2d(const Var& m, const IndexList& rows, const IndexList& cols);
Var vcat(const std::vector<Var>& parts);
Var reshape(const Var& v, Index rows, Index cols);

// Picks v(offset), v(offset + stride), ... from a column vector (`count` items).
Var strided(const Var& v, Index offset, Index stride, Index count);
// out(p * k + a) = parts[a](p) for k column vectors of equal length.
Var interleave_rows(const std::vector<Var>& parts);
// Assembles an (n*k) x (m*k) matrix from k*k blocks of n x m (row-major list):
// out(i*k + a, j*k + b) = blocks[a*k + b](i, j).
Var interleave(const std::vector<Var>& blocks, Index k);

// Linear algebra.
Var cholesky(const Var& k);
Var solve_lower(const Var& lower, const Var& b);
Var solve_lower_transposed(const Var& lower, const Var& b);
Var log_diag_sum(const Var& lower);
Var diag(const Var& m);
// Adds v (n x 1, or 1 x 1 broadcast) to the diagonal.
Var add_diag(const Var& m, const Var& v);

// Parameter maps.
Var tril_factor(const Var& raw);  // strict lower part, exp() on the diagonal
Var triu(const Var& raw);         // upper part including the diagonal

// out(i) = log(mean_j exp(m(i, j))).
Var row_logmeanexp(const Var& m);

}  // namespace mfgp::ad

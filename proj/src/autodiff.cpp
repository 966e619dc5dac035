#include "mfgp/autodiff.hpp"

#include "mfgp/error.hpp"
#include "mfgp/linalg.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mfgp::ad {

namespace {

using Stride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
using StridedMap = Eigen::Map<Matrix, 0, Stride>;
using ConstStridedMap = Eigen::Map<const Matrix, 0, Stride>;

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw InvalidArgument("autodiff: use of an unbound Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw InvalidArgument("autodiff: operands live on different tapes");
  return t;
}

std::string shape(const Var& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string("autodiff: shape mismatch in ") + op + " (" +
                          shape(a) + " vs " + shape(b) + ")");
  }
}

void expect_scalar(const Var& s, const char* op) {
  if (s.rows() != 1 || s.cols() != 1)
    throw InvalidArgument(std::string("autodiff: ") + op + " expects a 1x1 operand");
}

void expect_column(const Var& v, const char* op) {
  if (v.cols() != 1)
    throw InvalidArgument(std::string("autodiff: ") + op + " expects a column vector, got " +
                          shape(v));
}

Matrix scalar_matrix(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

bool grad(const Var& a) { return a.requires_grad(); }
bool grad(const Var& a, const Var& b) { return a.requires_grad() || b.requires_grad(); }

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw InvalidArgument("autodiff: scalar() on a non-1x1 node");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::constant(double value) { return constant(scalar_matrix(value)); }

Var Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& output) {
  if (output.tape() != this) throw InvalidArgument("autodiff: backward on a foreign Var");
  if (output.size() != 1) throw InvalidArgument("autodiff: backward needs a scalar output");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(output.id(), Matrix::Ones(1, 1));
  for (int i = output.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad, n.value);
  }
}

Matrix Tape::gradient(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---------------------------------------------------------------------------
// Elementwise

Var operator+(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "+");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), grad(a, b),
                [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
                  t.accumulate(ia, g);
                  t.accumulate(ib, g);
                });
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "-");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), grad(a, b),
                [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
                  t.accumulate(ia, g);
                  t.accumulate(ib, -g);
                });
}

Var operator-(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(-a.value(), grad(a),
                [ia](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(ia, -g); });
}

Var operator*(double s, const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(s * a.value(), grad(a),
                [ia, s](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(ia, s * g); });
}

Var operator+(const Var& a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push((a.value().array() + s).matrix(), grad(a),
                [ia](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(ia, g); });
}

Var cwise_mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "cwise_mul");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()), grad(a, b),
                [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
                  if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                  if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                });
}

Var cwise_div(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "cwise_div");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseQuotient(b.value()), grad(a, b),
                [ia, ib](Tape& t, const Matrix& g, const Matrix& out) {
                  const Matrix& bv = t.value(ib);
                  if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseQuotient(bv));
                  if (t.requires_grad(ib))
                    t.accumulate(ib, -(g.array() * out.array() / bv.array()).matrix());
                });
}

Var scale(const Var& m, const Var& s) {
  Tape& t = tape_of(m, s);
  expect_scalar(s, "scale");
  const int im = m.id(), is = s.id();
  return t.push(m.value() * s.scalar(), grad(m, s),
                [im, is](Tape& t, const Matrix& g, const Matrix&) {
                  if (t.requires_grad(im)) t.accumulate(im, g * t.value(is)(0, 0));
                  if (t.requires_grad(is))
                    t.accumulate(is, scalar_matrix(g.cwiseProduct(t.value(im)).sum()));
                });
}

Var add_scalar(const Var& m, const Var& s) {
  Tape& t = tape_of(m, s);
  expect_scalar(s, "add_scalar");
  const int im = m.id(), is = s.id();
  return t.push((m.value().array() + s.scalar()).matrix(), grad(m, s),
                [im, is](Tape& t, const Matrix& g, const Matrix&) {
                  t.accumulate(im, g);
                  if (t.requires_grad(is)) t.accumulate(is, scalar_matrix(g.sum()));
                });
}

Var scale_rows(const Var& m, const Var& v) {
  Tape& t = tape_of(m, v);
  if (v.cols() != 1 || v.rows() != m.rows())
    throw InvalidArgument("autodiff: scale_rows expects a " + std::to_string(m.rows()) +
                          "x1 vector, got " + shape(v));
  const int im = m.id(), iv = v.id();
  return t.push(v.value().asDiagonal() * m.value(), grad(m, v),
                [im, iv](Tape& t, const Matrix& g, const Matrix&) {
                  if (t.requires_grad(im)) t.accumulate(im, t.value(iv).asDiagonal() * g);
                  if (t.requires_grad(iv))
                    t.accumulate(iv, g.cwiseProduct(t.value(im)).rowwise().sum());
                });
}

Var scale_cols(const Var& m, const Var& v) {
  Tape& t = tape_of(m, v);
  if (v.cols() != 1 || v.rows() != m.cols())
    throw InvalidArgument("autodiff: scale_cols expects a " + std::to_string(m.cols()) +
                          "x1 vector, got " + shape(v));
  const int im = m.id(), iv = v.id();
  return t.push(m.value() * v.value().asDiagonal(), grad(m, v),
                [im, iv](Tape& t, const Matrix& g, const Matrix&) {
                  if (t.requires_grad(im)) t.accumulate(im, g * t.value(iv).asDiagonal());
                  if (t.requires_grad(iv))
                    t.accumulate(iv, g.cwiseProduct(t.value(im)).colwise().sum().transpose());
                });
}

Var exp(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value().array().exp().matrix(), grad(a),
                [ia](Tape& t, const Matrix& g, const Matrix& out) {
                  t.accumulate(ia, g.cwiseProduct(out));
                });
}

Var log(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value().array().log().matrix(), grad(a),
                [ia](Tape& t, const Matrix& g, const Matrix&) {
                  t.accumulate(ia, g.cwiseQuotient(t.value(ia)));
                });
}

Var square(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value().array().square().matrix(), grad(a),
                [ia](Tape& t, const Matrix& g, const Matrix&) {
                  t.accumulate(ia, 2.0 * g.cwiseProduct(t.value(ia)));
                });
}

Var reciprocal(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value().array().inverse().matrix(), grad(a),
                [ia](Tape& t, const Matrix& g, const Matrix& out) {
                  t.accumulate(ia, -(g.array() * out.array().square()).matrix());
                });
}

Var sqrt_clamped(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value().array().max(0.0).sqrt().matrix(), grad(a),
                [ia](Tape& t, const Matrix& g, const Matrix& out) {
                  Matrix d = (out.array() > 0.0)
                                 .select(0.5 * g.array() / out.array(), 0.0)
                                 .matrix();
                  t.accumulate(ia, d);
                });
}

// ---------------------------------------------------------------------------
// Products and reductions

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows())
    throw InvalidArgument("autodiff: matmul shape mismatch " + shape(a) + " * " + shape(b));
  const int ia = a.id(), ib = b.id();
  Matrix out;
  out.noalias() = a.value() * b.value();
  return t.push(std::move(out), grad(a, b), [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(ia)) {
      Matrix ga;
      ga.noalias() = g * t.value(ib).transpose();
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ib)) {
      Matrix gb;
      gb.noalias() = t.value(ia).transpose() * g;
      t.accumulate(ib, gb);
    }
  });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value().transpose(), grad(a),
                [ia](Tape& t, const Matrix& g, const Matrix&) {
                  t.accumulate(ia, g.transpose());
                });
}

Var outer_diff(const Var& p, const Var& q) {
  Tape& t = tape_of(p, q);
  expect_column(p, "outer_diff");
  expect_column(q, "outer_diff");
  const int ip = p.id(), iq = q.id();
  Matrix out = p.value().replicate(1, q.rows());
  out.rowwise() -= q.value().transpose().row(0);
  return t.push(std::move(out), grad(p, q), [ip, iq](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(ip)) t.accumulate(ip, g.rowwise().sum());
    if (t.requires_grad(iq)) t.accumulate(iq, -g.colwise().sum().transpose());
  });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return t.push(scalar_matrix(a.value().sum()), grad(a),
                [ia, r, c](Tape& t, const Matrix& g, const Matrix&) {
                  t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
                });
}

Var col_sums(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const Index r = a.rows();
  return t.push(a.value().colwise().sum(), grad(a),
                [ia, r](Tape& t, const Matrix& g, const Matrix&) {
                  t.accumulate(ia, g.replicate(r, 1));
                });
}

Var row_sums(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const Index c = a.cols();
  return t.push(a.value().rowwise().sum(), grad(a),
                [ia, c](Tape& t, const Matrix& g, const Matrix&) {
                  t.accumulate(ia, g.replicate(1, c));
                });
}

// ---------------------------------------------------------------------------
// Indexing

Var col(const Var& m, Index k) {
  Tape& t = tape_of(m);
  if (k < 0 || k >= m.cols()) throw InvalidArgument("autodiff: column index out of range");
  const int im = m.id();
  const Index r = m.rows(), c = m.cols();
  return t.push(m.value().col(k), grad(m), [im, k, r, c](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(r, c);
    full.col(k) = g;
    t.accumulate(im, full);
  });
}

Var gather_rows(const Var& m, const IndexList& rows) {
  Tape& t = tape_of(m);
  const Matrix& mv = m.value();
  Matrix out(static_cast<Index>(rows.size()), mv.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= mv.rows())
      throw InvalidArgument("autodiff: gather_rows index out of range");
    out.row(static_cast<Index>(r)) = mv.row(rows[r]);
  }
  const int im = m.id();
  const Index nr = mv.rows(), nc = mv.cols();
  return t.push(std::move(out), grad(m),
                [im, rows, nr, nc](Tape& t, const Matrix& g, const Matrix&) {
                  Matrix full = Matrix::Zero(nr, nc);
                  for (std::size_t r = 0; r < rows.size(); ++r)
                    full.row(rows[r]) += g.row(static_cast<Index>(r));
                  t.accumulate(im, full);
                });
}

Var gather2d(const Var& m, const IndexList& rows, const IndexList& cols) {
  Tape& t = tape_of(m);
  const Matrix& mv = m.value();
  for (Index r : rows)
    if (r < 0 || r >= mv.rows()) throw InvalidArgument("autodiff: gather2d row out of range");
  for (Index c : cols)
    if (c < 0 || c >= mv.cols()) throw InvalidArgument("autodiff: gather2d col out of range");
  const Index nr = static_cast<Index>(rows.size()), nc = static_cast<Index>(cols.size());
  Matrix out(nr, nc);
  for (Index j = 0; j < nc; ++j)
    for (Index i = 0; i < nr; ++i) out(i, j) = mv(rows[i], cols[j]);
  const int im = m.id();
  const Index sr = mv.rows(), sc = mv.cols();
  return t.push(std::move(out), grad(m),
                [im, rows, cols, sr, sc](Tape& t, const Matrix& g, const Matrix&) {
                  Matrix full = Matrix::Zero(sr, sc);
                  for (Index j = 0; j < g.cols(); ++j)
                    for (Index i = 0; i < g.rows(); ++i) full(rows[i], cols[j]) += g(i, j);
                  t.accumulate(im, full);
                });
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("autodiff: vcat of nothing");
  Tape& t = tape_of(parts.front());
  const Index c = parts.front().cols();
  Index r = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw InvalidArgument("autodiff: vcat across tapes");
    if (p.cols() != c) throw InvalidArgument("autodiff: vcat column mismatch");
    r += p.rows();
    needs = needs || p.requires_grad();
  }
  Matrix out(r, c);
  std::vector<std::pair<int, Index>> ids;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    ids.emplace_back(p.id(), p.rows());
    off += p.rows();
  }
  return t.push(std::move(out), needs, [ids](Tape& t, const Matrix& g, const Matrix&) {
    Index off = 0;
    for (const auto& [id, n] : ids) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleRows(off, n));
      off += n;
    }
  });
}

Var reshape(const Var& v, Index rows, Index cols) {
  Tape& t = tape_of(v);
  if (rows * cols != v.size()) throw InvalidArgument("autodiff: reshape size mismatch");
  const int iv = v.id();
  const Index r0 = v.rows(), c0 = v.cols();
  Matrix out = Eigen::Map<const Matrix>(v.value().data(), rows, cols);
  return t.push(std::move(out), grad(v), [iv, r0, c0](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(iv, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

Var strided(const Var& v, Index offset, Index stride, Index count) {
  Tape& t = tape_of(v);
  expect_column(v, "strided");
  if (count > 0 && offset + (count - 1) * stride >= v.rows())
    throw InvalidArgument("autodiff: strided read past the end");
  Matrix out(count, 1);
  for (Index k = 0; k < count; ++k) out(k, 0) = v.value()(offset + k * stride, 0);
  const int iv = v.id();
  const Index n = v.rows();
  return t.push(std::move(out), grad(v),
                [iv, n, offset, stride](Tape& t, const Matrix& g, const Matrix&) {
                  Matrix full = Matrix::Zero(n, 1);
                  for (Index k = 0; k < g.rows(); ++k) full(offset + k * stride, 0) = g(k, 0);
                  t.accumulate(iv, full);
                });
}

Var interleave_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("autodiff: interleave_rows of nothing");
  Tape& t = tape_of(parts.front());
  const Index n = parts.front().rows();
  const Index k = static_cast<Index>(parts.size());
  bool needs = false;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw InvalidArgument("autodiff: interleave_rows across tapes");
    expect_column(p, "interleave_rows");
    if (p.rows() != n) throw InvalidArgument("autodiff: interleave_rows length mismatch");
    needs = needs || p.requires_grad();
  }
  Matrix out(n * k, 1);
  std::vector<int> ids;
  for (Index a = 0; a < k; ++a) {
    const Matrix& pv = parts[a].value();
    for (Index p = 0; p < n; ++p) out(p * k + a, 0) = pv(p, 0);
    ids.push_back(parts[a].id());
  }
  return t.push(std::move(out), needs, [ids, n, k](Tape& t, const Matrix& g, const Matrix&) {
    for (Index a = 0; a < k; ++a) {
      if (!t.requires_grad(ids[a])) continue;
      Matrix part(n, 1);
      for (Index p = 0; p < n; ++p) part(p, 0) = g(p * k + a, 0);
      t.accumulate(ids[a], part);
    }
  });
}

Var interleave(const std::vector<Var>& blocks, Index k) {
  if (static_cast<Index>(blocks.size()) != k * k)
    throw InvalidArgument("autodiff: interleave expects k*k blocks");
  Tape& t = tape_of(blocks.front());
  const Index n = blocks.front().rows(), m = blocks.front().cols();
  bool needs = false;
  for (const auto& b : blocks) {
    if (b.tape() != &t) throw InvalidArgument("autodiff: interleave across tapes");
    if (b.rows() != n || b.cols() != m) throw InvalidArgument("autodiff: interleave block shape");
    needs = needs || b.requires_grad();
  }
  const Index total_rows = n * k;
  Matrix out(n * k, m * k);
  std::vector<int> ids;
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) {
      StridedMap dst(out.data() + a + b * total_rows, n, m, Stride(k * total_rows, k));
      dst = blocks[a * k + b].value();
      ids.push_back(blocks[a * k + b].id());
    }
  }
  return t.push(std::move(out), needs, [ids, n, m, k](Tape& t, const Matrix& g, const Matrix&) {
    const Index total_rows = n * k;
    for (Index a = 0; a < k; ++a) {
      for (Index b = 0; b < k; ++b) {
        const int id = ids[a * k + b];
        if (!t.requires_grad(id)) continue;
        ConstStridedMap src(g.data() + a + b * total_rows, n, m, Stride(k * total_rows, k));
        t.accumulate(id, Matrix(src));
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var cholesky(const Var& k) {
  Tape& t = tape_of(k);
  if (k.rows() != k.cols()) throw InvalidArgument("autodiff: cholesky of a non-square matrix");
  linalg::Cholesky chol = linalg::robust_cholesky(k.value());
  const int ik = k.id();
  return t.push(std::move(chol.lower), grad(k), [ik](Tape& t, const Matrix& g, const Matrix& l) {
    // Adjoint of A = L L^T for a symmetric input:
    //   P = Phi(L^T Lbar), S = L^-T P L^-1, Abar = (S + S^T) / 2
    // where Phi keeps the lower triangle and halves the diagonal.
    Matrix lbar = g.triangularView<Eigen::Lower>();
    Matrix p;
    p.noalias() = l.transpose() * lbar;
    p = p.triangularView<Eigen::Lower>();
    p.diagonal() *= 0.5;
    const auto lv = l.triangularView<Eigen::Lower>();
    Matrix s = lv.transpose().solve(p);                           // L^-T P
    s = lv.transpose().solve(s.transpose()).transpose().eval();   // (L^-T (L^-T P)^T)^T
    t.accumulate(ik, 0.5 * (s + s.transpose()));
  });
}

Var solve_lower(const Var& lower, const Var& b) {
  Tape& t = tape_of(lower, b);
  if (lower.rows() != lower.cols() || lower.cols() != b.rows())
    throw InvalidArgument("autodiff: solve_lower shape mismatch " + shape(lower) + " \\ " +
                          shape(b));
  const int il = lower.id(), ib = b.id();
  Matrix x = lower.value().triangularView<Eigen::Lower>().solve(b.value());
  return t.push(std::move(x), grad(lower, b), [il, ib](Tape& t, const Matrix& g, const Matrix& x) {
    // X = L^-1 B:  Bbar = L^-T Xbar,  Lbar = -tril(Bbar X^T)
    Matrix bbar = t.value(il).triangularView<Eigen::Lower>().transpose().solve(g);
    if (t.requires_grad(il)) {
      Matrix lbar = Matrix::Zero(x.rows(), x.rows());
      lbar.triangularView<Eigen::Lower>() = bbar * x.transpose();
      t.accumulate(il, -lbar);
    }
    if (t.requires_grad(ib)) t.accumulate(ib, bbar);
  });
}

Var solve_lower_transposed(const Var& lower, const Var& b) {
  Tape& t = tape_of(lower, b);
  if (lower.rows() != lower.cols() || lower.cols() != b.rows())
    throw InvalidArgument("autodiff: solve_lower_transposed shape mismatch");
  const int il = lower.id(), ib = b.id();
  Matrix x = lower.value().triangularView<Eigen::Lower>().transpose().solve(b.value());
  return t.push(std::move(x), grad(lower, b), [il, ib](Tape& t, const Matrix& g, const Matrix& x) {
    // X = L^-T B:  Bbar = L^-1 Xbar,  Lbar = -tril(X Bbar^T)
    Matrix bbar = t.value(il).triangularView<Eigen::Lower>().solve(g);
    if (t.requires_grad(il)) {
      Matrix lbar = Matrix::Zero(x.rows(), x.rows());
      lbar.triangularView<Eigen::Lower>() = x * bbar.transpose();
      t.accumulate(il, -lbar);
    }
    if (t.requires_grad(ib)) t.accumulate(ib, bbar);
  });
}

Var log_diag_sum(const Var& lower) {
  Tape& t = tape_of(lower);
  const int il = lower.id();
  const double v = lower.value().diagonal().array().abs().log().sum();
  const Index n = lower.rows();
  return t.push(scalar_matrix(v), grad(lower), [il, n](Tape& t, const Matrix& g, const Matrix&) {
    Matrix d = Matrix::Zero(n, n);
    d.diagonal() = g(0, 0) * t.value(il).diagonal().cwiseInverse();
    t.accumulate(il, d);
  });
}

Var diag(const Var& m) {
  Tape& t = tape_of(m);
  if (m.rows() != m.cols()) throw InvalidArgument("autodiff: diag of a non-square matrix");
  const int im = m.id();
  const Index n = m.rows();
  return t.push(m.value().diagonal(), grad(m), [im, n](Tape& t, const Matrix& g, const Matrix&) {
    Matrix d = Matrix::Zero(n, n);
    d.diagonal() = g.col(0);
    t.accumulate(im, d);
  });
}

Var add_diag(const Var& m, const Var& v) {
  Tape& t = tape_of(m, v);
  if (m.rows() != m.cols()) throw InvalidArgument("autodiff: add_diag of a non-square matrix");
  const bool broadcast = v.size() == 1;
  if (!broadcast && (v.cols() != 1 || v.rows() != m.rows()))
    throw InvalidArgument("autodiff: add_diag vector length mismatch");
  Matrix out = m.value();
  if (broadcast)
    out.diagonal().array() += v.scalar();
  else
    out.diagonal() += v.value().col(0);
  const int im = m.id(), iv = v.id();
  return t.push(std::move(out), grad(m, v),
                [im, iv, broadcast](Tape& t, const Matrix& g, const Matrix&) {
                  t.accumulate(im, g);
                  if (!t.requires_grad(iv)) return;
                  if (broadcast)
                    t.accumulate(iv, scalar_matrix(g.diagonal().sum()));
                  else
                    t.accumulate(iv, Matrix(g.diagonal()));
                });
}

Var tril_factor(const Var& raw) {
  Tape& t = tape_of(raw);
  if (raw.rows() != raw.cols()) throw InvalidArgument("autodiff: tril_factor of non-square");
  Matrix out = raw.value().triangularView<Eigen::StrictlyLower>();
  out.diagonal() = raw.value().diagonal().array().exp().matrix();
  const int ir = raw.id();
  return t.push(std::move(out), grad(raw), [ir](Tape& t, const Matrix& g, const Matrix& out) {
    Matrix d = g.triangularView<Eigen::StrictlyLower>();
    d.diagonal() = g.diagonal().cwiseProduct(out.diagonal());
    t.accumulate(ir, d);
  });
}

Var triu(const Var& raw) {
  Tape& t = tape_of(raw);
  Matrix out = raw.value().triangularView<Eigen::Upper>();
  const int ir = raw.id();
  return t.push(std::move(out), grad(raw), [ir](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(ir, Matrix(g.triangularView<Eigen::Upper>()));
  });
}

Var row_logmeanexp(const Var& m) {
  Tape& t = tape_of(m);
  const Matrix& mv = m.value();
  const Index n = mv.rows(), c = mv.cols();
  if (c == 0) throw InvalidArgument("autodiff: row_logmeanexp over zero columns");
  Matrix out(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double mx = mv.row(i).maxCoeff();
    out(i, 0) = mx + std::log((mv.row(i).array() - mx).exp().sum() / static_cast<double>(c));
  }
  const int im = m.id();
  return t.push(std::move(out), grad(m), [im, c](Tape& t, const Matrix& g, const Matrix& out) {
    const Matrix& mv = t.value(im);
    Matrix w = (mv.colwise() - out.col(0)).array().exp().matrix() / static_cast<double>(c);
    t.accumulate(im, g.col(0).asDiagonal() * w);
  });
}

}  // namespace mfgp::ad

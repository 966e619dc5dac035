#include "helpers.hpp"
#include "mfgp/autodiff.hpp"

#include <doctest.h>

using namespace mfgp::ad;

namespace {

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Max relative error between reverse-mode and central differences of
// <W, f(inputs)> for a random fixed W.
double fd_check(const Fn& f, std::vector<Matrix> inputs, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  Matrix w;
  auto eval = [&](const std::vector<Matrix>& in, std::vector<Matrix>* grads) {
    Tape t;
    std::vector<Var> vs;
    for (const auto& m : in) vs.push_back(t.variable(m));
    Var out = f(t, vs);
    if (w.size() == 0) w = th::randn(out.rows(), out.cols(), rng);
    Var obj = sum(cwise_mul(t.constant(w), out));
    if (grads) {
      t.backward(obj);
      for (const auto& v : vs) grads->push_back(t.gradient(v));
    }
    return obj.scalar();
  };
  std::vector<Matrix> grads;
  eval(inputs, &grads);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Index i = 0; i < inputs[k].size(); ++i) {
      auto p = inputs, m = inputs;
      p[k].data()[i] += h;
      m[k].data()[i] -= h;
      const double num = (eval(p, nullptr) - eval(m, nullptr)) / (2 * h);
      worst = std::max(worst, th::rel_err(grads[k].data()[i], num, 1e-6));
    }
  }
  return worst;
}

Matrix spd(Index n, std::mt19937_64& rng) {
  Matrix a = th::randn(n, n, rng);
  return a * a.transpose() + n * Matrix::Identity(n, n);
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("elementwise ops match finite differences") {
    std::mt19937_64 rng(1);
    Matrix a = th::randn(3, 4, rng), b = th::randn(3, 4, rng);
    Matrix pos = a.array().abs() + 0.5;
    CHECK(fd_check([](Tape&, const auto& v) { return v[0] + v[1]; }, {a, b}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return v[0] - (-v[1]); }, {a, b}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return cwise_mul(v[0], v[1]); }, {a, b}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return cwise_div(v[0], v[1]); }, {a, pos}) < 1e-5);
    CHECK(fd_check([](Tape&, const auto& v) { return exp(v[0]); }, {a}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return log(v[0]); }, {pos}) < 1e-5);
    CHECK(fd_check([](Tape&, const auto& v) { return square(v[0]) + 2.0; }, {a}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return reciprocal(v[0]); }, {pos}) < 1e-5);
    CHECK(fd_check([](Tape&, const auto& v) { return sqrt_clamped(v[0]); }, {pos}) < 1e-5);
    CHECK(fd_check([](Tape&, const auto& v) { return 3.0 * v[0]; }, {a}) < 1e-6);
  }

  TEST_CASE("broadcast and reduction ops match finite differences") {
    std::mt19937_64 rng(2);
    Matrix a = th::randn(4, 3, rng), s = th::randn(1, 1, rng);
    Matrix r = th::randn(4, 1, rng), c = th::randn(3, 1, rng);
    CHECK(fd_check([](Tape&, const auto& v) { return scale(v[0], v[1]); }, {a, s}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return add_scalar(v[0], v[1]); }, {a, s}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return scale_rows(v[0], v[1]); }, {a, r}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return scale_cols(v[0], v[1]); }, {a, c}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return sum(v[0]); }, {a}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return col_sums(v[0]); }, {a}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return row_sums(v[0]); }, {a}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return outer_diff(v[0], v[1]); }, {r, c}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return row_logmeanexp(v[0]); }, {a}) < 1e-6);
  }

  TEST_CASE("products and indexing match finite differences") {
    std::mt19937_64 rng(3);
    Matrix a = th::randn(4, 3, rng), b = th::randn(3, 5, rng), v6 = th::randn(12, 1, rng);
    CHECK(fd_check([](Tape&, const auto& v) { return matmul(v[0], v[1]); }, {a, b}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return transpose(v[0]); }, {a}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return col(v[0], 1); }, {a}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return gather_rows(v[0], {3, 0, 0, 2}); }, {a}) <
          1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return gather2d(v[0], {1, 1, 3}, {2, 0}); }, {a}) <
          1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return vcat({v[0], v[1]}); },
                   {Matrix(a.col(0)), Matrix(b.row(0).transpose())}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return reshape(v[0], 3, 4); }, {v6}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return strided(v[0], 1, 3, 4); }, {v6}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return interleave_rows({v[0], v[1]}); },
                   {Matrix(a.col(0)), Matrix(a.col(1))}) < 1e-6);
    CHECK(fd_check(
              [](Tape&, const auto& v) { return interleave({v[0], v[1], v[2], v[3]}, 2); },
              {a, th::randn(4, 3, rng), th::randn(4, 3, rng), th::randn(4, 3, rng)}) < 1e-6);
  }

  TEST_CASE("linear algebra ops match finite differences") {
    std::mt19937_64 rng(4);
    Matrix k = spd(4, rng), b = th::randn(4, 2, rng);
    Matrix raw = th::randn(4, 4, rng);
    auto sym = [](Tape&, const Var& x) { return 0.5 * (x + transpose(x)); };
    CHECK(fd_check([&](Tape& t, const auto& v) { return cholesky(sym(t, v[0])); }, {k}) < 1e-5);
    CHECK(fd_check([&](Tape& t, const auto& v) { return solve_lower(cholesky(sym(t, v[0])), v[1]); },
                   {k, b}) < 1e-5);
    CHECK(fd_check(
              [&](Tape& t, const auto& v) {
                return solve_lower_transposed(cholesky(sym(t, v[0])), v[1]);
              },
              {k, b}) < 1e-5);
    CHECK(fd_check([&](Tape& t, const auto& v) { return log_diag_sum(cholesky(sym(t, v[0]))); },
                   {k}) < 1e-5);
    CHECK(fd_check([](Tape&, const auto& v) { return diag(v[0]); }, {k}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return add_diag(v[0], v[1]); },
                   {k, Matrix(b.col(0))}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return add_diag(v[0], v[1]); },
                   {k, Matrix::Constant(1, 1, 0.3)}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return tril_factor(v[0]); }, {raw}) < 1e-6);
    CHECK(fd_check([](Tape&, const auto& v) { return triu(v[0]); }, {raw}) < 1e-6);
  }

  TEST_CASE("cholesky forward value and constants carry no gradient") {
    std::mt19937_64 rng(5);
    Matrix k = spd(5, rng);
    Tape t;
    Var l = cholesky(t.constant(k));
    CHECK((l.value() * l.value().transpose() - k).norm() < 1e-10);
    CHECK_FALSE(l.requires_grad());
    Var x = t.variable(Matrix::Ones(2, 2));
    Var y = sum(cwise_mul(x, t.constant(Matrix::Constant(2, 2, 3.0))));
    t.backward(y);
    CHECK(t.gradient(x).isApprox(Matrix::Constant(2, 2, 3.0)));
  }

  TEST_CASE("row_logmeanexp is stable for large magnitudes") {
    Tape t;
    Matrix m(1, 2);
    m << -1000.0, -1000.0;
    Var r = row_logmeanexp(t.constant(m));
    CHECK(r.scalar() == doctest::Approx(-1000.0));
  }
}

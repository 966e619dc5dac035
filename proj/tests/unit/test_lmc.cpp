#include "helpers.hpp"
#include "mfgp/error.hpp"
#include "mfgp/gp_exact.hpp"
#include "mfgp/lmc.hpp"

#include <doctest.h>

using namespace mfgp;

namespace {

Datasets smooth_data(int levels, int n, std::uint64_t seed, bool grads) {
  std::mt19937_64 rng(seed);
  Datasets out;
  for (int l = 1; l <= levels; ++l) {
    FidelityDataset ds;
    ds.level = l;
    ds.X = th::randn(n, 2, rng);
    ds.Y.resize(n);
    ds.G.resize(n, 2);
    const double s = 1.0 + 0.3 * l;
    for (int i = 0; i < n; ++i) {
      const double a = ds.X(i, 0), b = ds.X(i, 1);
      ds.Y[i] = std::sin(s * a) + 0.5 * b * b + 0.1 * l;
      ds.G(i, 0) = s * std::cos(s * a);
      ds.G(i, 1) = b;
    }
    if (!grads) ds.G.resize(0, 0);
    out.push_back(ds);
  }
  return out;
}

}  // namespace

TEST_SUITE("lmc") {
  TEST_CASE("single term single fidelity gram equals the single GP gram bitwise") {
    std::mt19937_64 rng(31);
    TaggedInputs a{th::randn(6, 2, rng), std::vector<int>(6, 1)};
    KernelParams k(1.7, VectorXd::Constant(2, 0.9));
    IndexMixing one{{MatrixXd::Identity(1, 1)}};
    MatrixXd g = compute_k_lmc(a, a, {k}, one, false, false);
    MatrixXd s = assemble_gram(a.X, a.X, k, VectorXd(), false);
    CHECK((g - s).cwiseAbs().maxCoeff() == 0.0);
    MatrixXd gg = compute_k_lmc(a, a, {k}, one, true, true);
    MatrixXd sg = assemble_gram(a.X, a.X, k, VectorXd(), true);
    CHECK((gg - sg).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("nested identical inputs give the Kronecker form") {
    std::mt19937_64 rng(32);
    const MatrixXd x = th::randn(4, 2, rng);
    TaggedInputs a;
    a.X.resize(12, 2);
    for (int l = 0; l < 3; ++l) {
      a.X.middleRows(4 * l, 4) = x;
      for (int i = 0; i < 4; ++i) a.level.push_back(l + 1);
    }
    KernelParams k(1.0, VectorXd::Constant(2, 1.1));
    IndexMixing mix;
    mix.factors.push_back(MatrixXd(th::randn(3, 3, rng).triangularView<Eigen::Upper>()));
    MatrixXd g = compute_k_lmc(a, a, {k}, mix, false, false);
    MatrixXd base = assemble_gram(x, x, k, VectorXd(), false);
    MatrixXd ki = mix.coregionalization(0);
    MatrixXd kron(12, 12);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) kron.block(4 * i, 4 * j, 4, 4) = ki(i, j) * base;
    CHECK((g - kron).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("two fidelities one point each by hand") {
    TaggedInputs a;
    a.X.resize(2, 1);
    a.X << 0.0, 1.0;
    a.level = {1, 2};
    KernelParams k1(1.0, VectorXd::Ones(1)), k2(1.0, VectorXd::Constant(1, 2.0));
    MatrixXd b1(2, 2), b2(2, 2);
    b1 << 1.0, 0.5, 0.0, 1.0;
    b2 << 0.3, 0.0, 0.0, 2.0;
    IndexMixing mix{{b1, b2}};
    MatrixXd g = compute_k_lmc(a, a, {k1, k2}, mix, false, false);
    const MatrixXd c1 = b1 * b1.transpose(), c2 = b2 * b2.transpose();
    const double r1 = std::exp(-0.5), r2 = std::exp(-0.125);
    CHECK(g(0, 0) == doctest::Approx(c1(0, 0) + c2(0, 0)));
    CHECK(g(1, 1) == doctest::Approx(c1(1, 1) + c2(1, 1)));
    CHECK(g(0, 1) == doctest::Approx(c1(0, 1) * r1 + c2(0, 1) * r2));
    CHECK(g(1, 0) == doctest::Approx(g(0, 1)));
    a.level = {1, 3};
    CHECK_THROWS_AS(compute_k_lmc(a, a, {k1, k2}, mix, false, false), InvalidArgument);
  }

  TEST_CASE("recovers a known lengthscale from prior samples") {
    std::mt19937_64 rng(33);
    const int n = 60;
    MatrixXd x = th::uniform(n, -4.0, 4.0, rng);
    KernelParams truth(1.0, VectorXd::Ones(1));
    MatrixXd k = assemble_gram(x, x, truth, VectorXd::Constant(1, 1e-6), false);
    Eigen::LLT<MatrixXd> llt(k);
    VectorXd y = llt.matrixL() * th::randn(n, 1, rng);
    FidelityDataset ds{1, x, y, MatrixXd(), {}};
    LMCModel m({ds}, LMCConfig{});
    Schedule s;
    s.stages = {{300, 0.03}, {200, 0.01}};
    train_lmc(m, s);
    const double ls = m.kernels()[0].lengthscales[0];
    CHECK(ls > 0.5);
    CHECK(ls < 2.0);
  }

  TEST_CASE("zero stages leave the parameters unchanged") {
    LMCModel m(smooth_data(2, 5, 34, false), LMCConfig{});
    const VectorXd before = m.params().unconstrained();
    train_lmc(m, Schedule{});
    CHECK(m.params().unconstrained() == before);
  }

  TEST_CASE("interpolates a high-fidelity training point") {
    Datasets d = smooth_data(2, 6, 35, false);
    LMCModel m(d, LMCConfig{});
    m.params().set_value("lmc.noise", MatrixXd::Constant(1, 1, 1.0000001e-6));
    PosteriorGaussian p = m.predict(d[1].X.topRows(1));
    CHECK(std::abs(p.mean[0] - d[1].Y[0]) < 1e-4);
  }

  TEST_CASE("decoupled mixing equals a single GP on the top fidelity") {
    Datasets d = smooth_data(2, 7, 36, false);
    LMCModel m(d, LMCConfig{});
    IndexMixing mix;
    mix.factors = {MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2)};
    mix.factors[0](0, 0) = 1.0;
    mix.factors[1](1, 1) = 1.5;
    m.set_mixing(mix);
    m.params().set_value("lmc.k1.lengthscales", MatrixXd::Constant(2, 1, 0.8));
    std::mt19937_64 rng(37);
    MatrixXd q = th::randn(10, 2, rng);
    PosteriorGaussian p = m.predict(q);

    ExactGPModel gp;
    gp.train_inputs = d[1].X;
    gp.train_targets = d[1].Y;
    gp.params = KernelParams(2.25, VectorXd::Constant(2, 0.8));
    gp.noise = VectorXd::Constant(1, m.noise_diagonal()[0]);
    PosteriorGaussian ref = posterior(gp, q, false);
    CHECK((p.mean - ref.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((p.variance() - ref.variance()).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("predictions do not depend on the order of the data") {
    Datasets d = smooth_data(2, 6, 38, true);
    LMCConfig c;
    c.grad_enhanced = true;
    LMCModel a(d, c);
    Datasets r = d;
    for (auto& ds : r) {
      ds.X = ds.X.colwise().reverse().eval();
      ds.Y = ds.Y.reverse().eval();
      ds.G = ds.G.colwise().reverse().eval();
    }
    LMCModel b(r, c);
    std::mt19937_64 rng(39);
    MatrixXd q = th::randn(8, 2, rng);
    CHECK((a.predict(q).mean - b.predict(q).mean).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("gradients lower the training error with shared hyperparameters") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Datasets d = smooth_data(2, 8, 40 + seed, true);
      LMCConfig cg;
      cg.grad_enhanced = true;
      LMCModel g(d, cg);
      LMCModel v(d, LMCConfig{});
      for (const char* name : {"lmc.noise"}) {
        g.params().set_value(name, MatrixXd::Constant(1, 1, 0.05));
        v.params().set_value(name, MatrixXd::Constant(1, 1, 0.05));
      }
      const MatrixXd& x = d[1].X;
      const double eg = (g.predict(x).mean - d[1].Y).norm();
      const double ev = (v.predict(x).mean - d[1].Y).norm();
      if (eg <= ev) ++wins;
    }
    CHECK(wins >= 4);
  }

  TEST_CASE("objective matches the exact log marginal likelihood") {
    Datasets d = smooth_data(1, 6, 41, false);
    LMCModel m(d, LMCConfig{});
    ExactGPModel gp;
    gp.train_inputs = d[0].X;
    gp.train_targets = d[0].Y;
    const IndexMixing mix = m.mixing();
    const double b2 = mix.coregionalization(0)(0, 0);
    gp.params = KernelParams(b2, m.kernels()[0].lengthscales);
    gp.noise = VectorXd::Constant(1, m.noise_diagonal()[0]);
    CHECK(m.log_marginal_likelihood() == doctest::Approx(log_marginal_likelihood(gp)).epsilon(1e-10));
  }
}

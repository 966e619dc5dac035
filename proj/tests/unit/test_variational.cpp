#include "helpers.hpp"
#include "mfgp/error.hpp"
#include "mfgp/gp_exact.hpp"
#include "mfgp/linalg.hpp"
#include "mfgp/variational.hpp"

#include <doctest.h>

using namespace mfgp;

namespace {

VariationalLayer first_layer(const MatrixXd& z, const VectorXd& mq, const MatrixXd& factor) {
  VariationalLayer v;
  v.inducing_base = z;
  v.inducing_prev = MatrixXd(z.rows(), 0);
  v.mq = mq;
  v.sq_factor = factor;
  return v;
}

}  // namespace

TEST_SUITE("variational") {
  TEST_CASE("gaussian_kl closed forms") {
    const MatrixXd one = MatrixXd::Ones(1, 1);
    CHECK(gaussian_kl(VectorXd::Zero(1), one, VectorXd::Zero(1), one) == doctest::Approx(0.0));
    CHECK(gaussian_kl(VectorXd::Ones(1), one, VectorXd::Zero(1), one) == doctest::Approx(0.5));
    CHECK(gaussian_kl(VectorXd::Zero(1), 0.5 * one, VectorXd::Zero(1), one) ==
          doctest::Approx(0.318147).epsilon(1e-6));
  }

  TEST_CASE("gaussian_kl is nonnegative and vanishes at equality") {
    std::mt19937_64 rng(51);
    for (int t = 0; t < 30; ++t) {
      const int m = 1 + t % 6;
      MatrixXd a = th::randn(m, m, rng);
      MatrixXd kp = a * a.transpose() + 0.5 * MatrixXd::Identity(m, m);
      MatrixXd f = th::randn(m, m, rng).triangularView<Eigen::Lower>();
      f.diagonal() = f.diagonal().cwiseAbs().array() + 0.1;
      VectorXd mq = th::randn(m, 1, rng), mp = th::randn(m, 1, rng);
      CHECK(gaussian_kl(mq, f, mp, kp) >= 0.0);
      MatrixXd l = kp.llt().matrixL();
      CHECK(std::abs(gaussian_kl(mp, l, mp, kp)) < 1e-9);
    }
  }

  TEST_CASE("prior-matching q returns prior marginals") {
    std::mt19937_64 rng(52);
    const int d = 2;
    KernelParams k(1.4, VectorXd::Constant(d, 0.9));
    MatrixXd z = th::randn(5, d, rng), x = th::randn(7, d, rng);
    for (bool grad : {false, true}) {
      MatrixXd kzz = assemble_gram(z, z, k, VectorXd(), grad);
      MatrixXd l = kzz.llt().matrixL();
      VariationalLayer v = first_layer(z, VectorXd::Zero(kzz.rows()), l);
      GaussianBatch q = layer_conditional(v, x, k, grad);
      CHECK(q.mean.cwiseAbs().maxCoeff() < 1e-10);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        MatrixXd prior = grad ? se_grad_block(x.row(i).transpose(), x.row(i).transpose(), k)
                              : MatrixXd::Constant(1, 1, 1.4);
        CHECK((q.blocks[i] - prior).cwiseAbs().maxCoeff() < 1e-9);
        if (grad)
          for (int a = 1; a <= d; ++a) CHECK(std::abs(q.blocks[i](0, a)) < 1e-9);
      }
    }
  }

  TEST_CASE("deterministic conditioning reproduces the targets") {
    std::mt19937_64 rng(53);
    KernelParams k(1.0, VectorXd::Constant(2, 1.2));
    MatrixXd x = th::randn(6, 2, rng);
    VectorXd y = th::randn(6, 1, rng);
    VariationalLayer v = first_layer(x, y, 1e-9 * MatrixXd::Identity(6, 6));
    GaussianBatch q = layer_conditional(v, x, k);
    CHECK((q.mean - y).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(q.variance().cwiseAbs().maxCoeff() < 1e-6);

    // Agrees with the exact posterior mean at new points.
    ExactGPModel gp{x, y, k, VectorXd::Zero(1), 0.0, false};
    MatrixXd s = th::randn(4, 2, rng);
    CHECK((layer_conditional(v, s, k).mean - posterior(gp, s, false).mean).cwiseAbs().maxCoeff() <
          1e-6);
  }

  TEST_CASE("single inducing point scalar algebra") {
    KernelParams k(2.0, VectorXd::Ones(1));
    MatrixXd z = MatrixXd::Constant(1, 1, 0.2), x = MatrixXd::Constant(1, 1, -0.5);
    VariationalLayer v = first_layer(z, VectorXd::Constant(1, 0.7), MatrixXd::Constant(1, 1, 0.3));
    GaussianBatch q = layer_conditional(v, x, k);
    const double kzx = 2.0 * std::exp(-0.5 * 0.49), alpha = kzx / 2.0;
    CHECK(q.mean[0] == doctest::Approx(alpha * 0.7).epsilon(1e-12));
    CHECK(q.blocks[0](0, 0) == doctest::Approx(2.0 - alpha * alpha * (2.0 - 0.09)).epsilon(1e-12));
  }

  TEST_CASE("gradient conditional block is symmetric with nonnegative diagonal") {
    std::mt19937_64 rng(54);
    KernelParams k(1.0, VectorXd::Constant(2, 0.8));
    MatrixXd z = th::randn(4, 2, rng), x = th::randn(5, 2, rng);
    MatrixXd f = th::randn(12, 12, rng).triangularView<Eigen::Lower>();
    f.diagonal() = f.diagonal().cwiseAbs().array() * 0.1 + 0.01;
    VariationalLayer v = first_layer(z, th::randn(12, 1, rng), f);
    GaussianBatch q = layer_conditional(v, x, k, true);
    for (const auto& b : q.blocks) {
      CHECK((b - b.transpose()).norm() < 1e-12);
      CHECK(b.diagonal().minCoeff() >= -1e-10);
    }
  }

  TEST_CASE("single-layer ELBO bounds the log marginal likelihood") {
    std::mt19937_64 rng(55);
    for (int t = 0; t < 20; ++t) {
      const int n = 3 + t % 6, d = 1 + t % 2;
      KernelParams k(th::uniform(1, 0.5, 2.0, rng)[0], th::uniform(d, 0.5, 2.0, rng));
      const double noise = th::uniform(1, 0.01, 0.5, rng)[0];
      MatrixXd x = th::randn(n, d, rng);
      VectorXd y = th::randn(n, 1, rng);
      MatrixXd f = th::randn(n, n, rng).triangularView<Eigen::Lower>();
      f.diagonal() = f.diagonal().cwiseAbs().array() + 0.05;
      VariationalLayer v = first_layer(x, th::randn(n, 1, rng), f);
      ExactGPModel gp{x, y, k, VectorXd::Constant(1, noise), 0.0, false};
      CHECK(single_layer_elbo(v, x, y, k, noise) <= log_marginal_likelihood(gp) + 1e-6);
    }
  }

  TEST_CASE("ELBO with no data is minus the KL") {
    KernelParams k(1.0, VectorXd::Ones(1));
    MatrixXd z(2, 1);
    z << 0.0, 1.0;
    VectorXd mq(2);
    mq << 0.3, -0.2;
    MatrixXd f = 0.5 * MatrixXd::Identity(2, 2);
    VariationalLayer v = first_layer(z, mq, f);
    MatrixXd kzz = assemble_gram(z, z, k, VectorXd(), false);
    CHECK(single_layer_elbo(v, MatrixXd(0, 1), VectorXd(0), k, 0.1) ==
          doctest::Approx(-gaussian_kl(mq, f, VectorXd::Zero(2), kzz)));
  }

  TEST_CASE("taped ELBO agrees with the closed form and trains upward") {
    std::mt19937_64 rng(56);
    MatrixXd x = th::uniform(5, -2, 2, rng);
    VectorXd y = x.col(0).array().sin();
    SingleLayerELBO obj(x, y, x, KernelParams(1.0, VectorXd::Ones(1)), 0.1);
    ad::Tape t;
    auto b = obj.params().bind(t);
    const double taped = obj.evaluate(t, b, 0).scalar();
    CHECK(taped == doctest::Approx(single_layer_elbo(obj.layer(), x, y, obj.kernel(), obj.noise()))
                       .epsilon(1e-10));
    Schedule s;
    s.stages = {{300, 0.01}};
    LossTrace tr = run_schedule(obj, s);
    double head = 0, tail = 0;
    for (int i = 0; i < 30; ++i) {
      head += tr[i].loss;
      tail += tr[tr.size() - 1 - i].loss;
    }
    CHECK(tail < head);
    CHECK(check_gradient(obj, 0).max_rel_error < 1e-4);
  }

  TEST_CASE("shape validation") {
    VariationalLayer v = first_layer(MatrixXd::Zero(3, 1), VectorXd::Zero(2), MatrixXd::Identity(3, 3));
    CHECK_THROWS_AS(v.validate(1), InvalidArgument);
  }
}

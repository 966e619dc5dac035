#include "helpers.hpp"
#include "toy_data.hpp"
#include "mfgp/error.hpp"
#include "mfgp/grad_deep_gp.hpp"

#include <doctest.h>

#include <numbers>

using namespace mfgp;

namespace {

DeepGPConfig value_config(DGPObjective o = DGPObjective::kElbo) {
  DeepGPConfig c;
  c.objective = o;
  c.samples_train = 8;
  return c;
}


void randomize(DeepGPModel& m, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  VectorXd u = m.params().unconstrained();
  m.params().set_unconstrained(u + th::randn(u.size(), 1, rng) * scale);
}

}  // namespace

TEST_SUITE("deep_gp") {
  TEST_CASE("sample_layer limits and statistics") {
    GaussianBatch b;
    b.width = 1;
    b.mean = VectorXd::Constant(3, 1.5);
    b.blocks.assign(3, MatrixXd::Zero(1, 1));
    std::mt19937_64 rng(1);
    CHECK(sample_layer(b, rng) == b.mean);

    b.mean = VectorXd::Constant(1, 2.0);
    b.blocks = {MatrixXd::Constant(1, 1, 9.0)};
    std::mt19937_64 r1(7), r2(7);
    CHECK(sample_layer(b, r1) == sample_layer(b, r2));

    const int n = 100000;
    double s = 0, s2 = 0;
    std::mt19937_64 r(8);
    for (int i = 0; i < n; ++i) {
      const double v = sample_layer(b, r)[0];
      s += v;
      s2 += v * v;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean - 2.0) < 0.05);
    CHECK(std::abs(var - 9.0) < 0.3);

    b.blocks = {MatrixXd::Constant(1, 1, -1e-6)};
    CHECK_THROWS_AS(sample_layer(b, r), NumericalFailure);
    b.blocks = {MatrixXd::Constant(1, 1, -1e-14)};
    CHECK(sample_layer(b, r)[0] == 2.0);
  }

  TEST_CASE("mixture variance is the law of total variance") {
    std::mt19937_64 rng(2);
    MixturePosterior m;
    m.width = 1;
    m.means = th::randn(5, 7, rng);
    m.variances = th::randn(5, 7, rng).cwiseAbs();
    const VectorXd mu = m.mean();
    for (int i = 0; i < 5; ++i) {
      double ev = 0, vm = 0;
      for (int j = 0; j < 7; ++j) {
        ev += m.variances(i, j) / 7;
        vm += (m.means(i, j) - mu[i]) * (m.means(i, j) - mu[i]) / 7;
      }
      CHECK(std::abs(m.variance()[i] - (ev + vm)) < 1e-10);
    }
  }

  TEST_CASE("affine pass-through when the layer kernel vanishes") {
    auto [nz, d] = normalize(th::toy_1d(8, 4, false));
    DeepGPModel m(d, value_config());
    LayerKernelParams k = m.layer_kernel(2);
    k.gx.variance = 1e-14;
    k.gamma.variance = 1e-14;
    k.kernel_noise = 2e-6;
    m.set_layer_kernel(2, k);
    std::mt19937_64 rng(3);
    MatrixXd x = th::uniform(6, -1.5, 1.5, rng);
    const int s = 2000;
    DeepPosterior p = m.compute_deep_posterior(x, s, 11);
    // Per path the layer-2 mean is the layer-1 draw.
    CHECK((p.layers[1].means - p.samples[0]).cwiseAbs().maxCoeff() < 1e-6);
    const VectorXd m1 = p.layers[0].mean(), m2 = p.layers[1].mean();
    const VectorXd se = (p.layers[0].variance() / s).cwiseSqrt();
    for (int i = 0; i < x.rows(); ++i) CHECK(std::abs(m1[i] - m2[i]) <= 4 * se[i] + 1e-9);
  }

  TEST_CASE("marginals do not depend on the rest of the batch") {
    auto [nz, d] = normalize(th::toy_1d(8, 4, false));
    DeepGPModel m(d, value_config());
    std::mt19937_64 rng(4);
    MatrixXd x = th::uniform(5, -1.5, 1.5, rng);
    const int s = 10000;
    MixturePosterior full = m.predict(x, s, 21);
    MixturePosterior one = m.predict(x.topRows(1), s, 22);
    const double sa = std::sqrt(full.means.row(0).array().square().mean() -
                                std::pow(full.means.row(0).mean(), 2));
    const double sb = std::sqrt(one.means.row(0).array().square().mean() -
                                std::pow(one.means.row(0).mean(), 2));
    const double tol = 3.0 * std::sqrt((sa * sa + sb * sb) / s) + 1e-12;
    CHECK(std::abs(full.mean()[0] - one.mean()[0]) <= tol);
    CHECK(std::abs(full.variance()[0] - one.variance()[0]) <= 0.05 * full.variance()[0] + 1e-9);
  }

  TEST_CASE("mixture mean standard error shrinks like 1/sqrt(N)") {
    auto [nz, d] = normalize(th::toy_1d(8, 4, false));
    DeepGPModel m(d, value_config());
    MatrixXd x = MatrixXd::Constant(1, 1, 0.3);
    auto spread = [&](int s) {
      std::vector<double> means;
      for (int r = 0; r < 40; ++r) means.push_back(m.predict(x, s, 1000 + r).mean()[0]);
      double mu = 0;
      for (double v : means) mu += v / means.size();
      double var = 0;
      for (double v : means) var += (v - mu) * (v - mu) / (means.size() - 1);
      return std::sqrt(var);
    };
    const double ratio = spread(1000) / spread(10);
    CHECK(ratio >= 0.05);
    CHECK(ratio <= 0.2);
  }

  TEST_CASE("one level reduces to the single-layer ELBO") {
    auto [nz, d] = normalize(th::toy_1d(8, 4, false));
    Datasets one{d[0]};
    DeepGPModel m(one, value_config());
    randomize(m, 5, 0.1);
    const double e = m.objective_value(0, 1, DGPObjective::kElbo);
    const double ref = single_layer_elbo(m.variational(1), one[0].X, one[0].Y, m.layer1_kernel(),
                                         m.likelihood_noise(1));
    CHECK(e == doctest::Approx(ref).epsilon(1e-9));
  }

  TEST_CASE("PLL with one component is a Gaussian log density minus KL") {
    auto [nz, d] = normalize(th::toy_1d(8, 4, false));
    Datasets one{d[0]};
    DeepGPModel m(one, value_config(DGPObjective::kPll));
    randomize(m, 6, 0.1);
    ad::Tape t;
    auto b = m.params().bind(t);
    auto parts = m.objective_parts(t, b, 0, 1, DGPObjective::kPll);
    GaussianBatch q = layer_conditional(m.variational(1), one[0].X, m.layer1_kernel());
    const double s2 = m.likelihood_noise(1);
    double ll = 0;
    for (Eigen::Index i = 0; i < q.mean.size(); ++i) {
      const double v = q.blocks[i](0, 0) + s2, r = one[0].Y[i] - q.mean[i];
      ll += -0.5 * std::log(2 * std::numbers::pi * v) - 0.5 * r * r / v;
    }
    CHECK(parts.reconstruction.scalar() == doctest::Approx(ll).epsilon(1e-9));
    CHECK(parts.total.scalar() == doctest::Approx(ll - parts.kl.scalar()).epsilon(1e-9));
  }

  TEST_CASE("PLL reconstruction dominates the ELBO reconstruction") {
    auto [nz, d] = normalize(th::toy_1d(6, 3, false));
    for (std::uint64_t r = 0; r < 20; ++r) {
      DeepGPModel m(d, value_config());
      randomize(m, 100 + r, 0.3);
      ad::Tape t;
      auto b = m.params().bind(t);
      const double elbo = m.objective_parts(t, b, r, 5, DGPObjective::kElbo).reconstruction.scalar();
      const double pll = m.objective_parts(t, b, r, 5, DGPObjective::kPll).reconstruction.scalar();
      CHECK(pll >= elbo - 1e-9);
    }
  }

  TEST_CASE("beta scales the KL linearly") {
    auto [nz, d] = normalize(th::toy_1d(6, 3, false));
    DeepGPConfig c1 = value_config(), c2 = value_config();
    c2.beta = 2.0;
    DeepGPModel a(d, c1), b(d, c2);
    ad::Tape t;
    auto bound = a.params().bind(t);
    const double kl = a.objective_parts(t, bound, 3, 4, DGPObjective::kElbo).kl.scalar();
    CHECK(b.objective_value(3, 4, DGPObjective::kElbo) ==
          doctest::Approx(a.objective_value(3, 4, DGPObjective::kElbo) - kl).epsilon(1e-12));
  }

  TEST_CASE("saturated likelihood with beta zero") {
    auto [nz, d] = normalize(th::toy_1d(6, 3, false));
    Datasets one{d[0]};
    DeepGPConfig c = value_config();
    c.beta = 1e-300;
    DeepGPModel m(one, c);
    // Deterministic q pinned to the data at the inducing points = data points.
    VariationalLayer v = m.variational(1);
    v.sq_factor = 1e-9 * MatrixXd::Identity(v.mq.size(), v.mq.size());
    m.set_variational(1, v);
    KernelParams k = m.layer1_kernel();
    k.kernel_noise = 2e-6;
    m.set_layer1_kernel(k);
    const double s2 = m.likelihood_noise(1);
    const double expect = -0.5 * one[0].size() * std::log(2 * std::numbers::pi * s2);
    CHECK(m.objective_value(0, 1, DGPObjective::kElbo) == doctest::Approx(expect).epsilon(1e-3));
  }

  TEST_CASE("objective gradients match finite differences") {
    auto [nz, d] = normalize(th::toy_1d(5, 3, false));
    for (auto o : {DGPObjective::kElbo, DGPObjective::kPll}) {
      DeepGPModel m(d, value_config(o));
      randomize(m, 9, 0.05);
      GradientCheck g = check_gradient(m, 17);
      INFO("worst " << g.worst_name);
      CHECK(g.max_rel_error < 1e-3);
    }
  }

  TEST_CASE("training fits the high-fidelity data and predictions are reproducible") {
    auto [nz, d] = normalize(th::toy_1d(10, 5, false));
    DeepGPModel m(d, value_config());
    Schedule s;
    s.stages = {{150, 0.03}, {100, 0.01}};
    s.seed = 4;
    LossTrace tr = run_schedule(m, s);
    CHECK(tr.size() == 250);
    MixturePosterior p = m.predict(d[1].X, 300, 5);
    const VectorXd mu = p.mean(), sd = p.variance().cwiseSqrt();
    const double noise = m.likelihood_noise(2);
    for (Eigen::Index i = 0; i < mu.size(); ++i)
      CHECK(std::abs(mu[i] - d[1].Y[i]) <= 3 * std::sqrt(sd[i] * sd[i] + noise));
    MixturePosterior again = m.predict(d[1].X, 300, 5);
    CHECK(again.means == p.means);
    CHECK(m.objective_value(1, 10, DGPObjective::kElbo) == m.objective_value(1, 10, DGPObjective::kElbo));
  }

  TEST_CASE("empty queries and bad input") {
    auto [nz, d] = normalize(th::toy_1d(6, 3, false));
    DeepGPModel m(d, value_config());
    MixturePosterior p = m.predict(MatrixXd(0, 1), 10, 0);
    CHECK(p.points() == 0);
    CHECK(p.mean().size() == 0);
    CHECK_THROWS_AS(m.predict(MatrixXd::Zero(2, 3), 10, 0), InvalidArgument);
    DeepGPConfig bad = value_config();
    bad.beta = 0.0;
    CHECK_THROWS_AS(DeepGPModel(d, bad), InvalidArgument);
    CHECK(parse_dgp_objective("pll") == DGPObjective::kPll);
    CHECK_THROWS_AS(parse_dgp_objective("mll"), InvalidArgument);
  }

  TEST_CASE("fidelity index covers each datum once") {
    Datasets d = th::toy_1d(6, 3, false);
    d[1].X.row(0) = d[0].X.row(2);
    DeepGPModel m(d, value_config());
    CHECK(m.union_inputs().rows() == 8);
    for (int l = 1; l <= 2; ++l) {
      const auto& idx = m.fidelity_index(l);
      CHECK(idx.size() == static_cast<std::size_t>(d[l - 1].size()));
      for (std::size_t i = 0; i < idx.size(); ++i)
        CHECK(m.union_inputs().row(idx[i]) == d[l - 1].X.row(static_cast<Eigen::Index>(i)));
    }
  }
}

#include "helpers.hpp"
#include "toy_data.hpp"
#include "mfgp/deep_gp.hpp"
#include "mfgp/error.hpp"
#include "mfgp/lmc.hpp"
#include "mfgp/optim.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace mfgp;

namespace {

// Maximizes -(w - target)^2 summed over a free vector.
class Bowl : public Objective {
 public:
  explicit Bowl(VectorXd w0, double target = 0.0) : target_(target) {
    params_.add("w", w0, Constraint::kFree);
  }
  ParamRegistry& params() override { return params_; }
  ad::Var evaluate(ad::Tape&, const ParamRegistry::Bound& b, std::uint64_t) override {
    return -sum(square(b[0] + (-target_)));
  }

 private:
  ParamRegistry params_;
  double target_;
};

class Constant : public Objective {
 public:
  Constant() { params_.add("a", MatrixXd::Constant(2, 1, 0.3), Constraint::kPositive); }
  ParamRegistry& params() override { return params_; }
  ad::Var evaluate(ad::Tape& t, const ParamRegistry::Bound& b, std::uint64_t) override {
    return t.constant(4.0) + 0.0 * sum(b[0]);
  }

 private:
  ParamRegistry params_;
};

class LogOfFree : public Objective {
 public:
  LogOfFree() { params_.add("bad", MatrixXd::Constant(1, 1, 1e-320), Constraint::kFree); }
  ParamRegistry& params() override { return params_; }
  ad::Var evaluate(ad::Tape&, const ParamRegistry::Bound& b, std::uint64_t) override {
    return sum(log(b[0]));
  }

 private:
  ParamRegistry params_;
};

Datasets three_points(bool grads) {
  FidelityDataset d;
  d.level = 1;
  d.X.resize(3, 1);
  d.X << -0.8, 0.1, 0.9;
  d.Y = Eigen::Vector3d(0.3, -0.4, 0.8);
  if (grads) d.G = Eigen::Vector3d(1.0, 0.2, -0.5);
  return {d};
}

}  // namespace

TEST_SUITE("optim") {
  TEST_CASE("registry transforms round trip and stay valid") {
    std::mt19937_64 rng(91);
    ParamRegistry r;
    r.add("pos", MatrixXd::Constant(3, 1, 0.7), Constraint::kPositive, 1e-6);
    MatrixXd lower = th::randn(4, 4, rng).triangularView<Eigen::Lower>();
    lower.diagonal() = lower.diagonal().cwiseAbs().array() + 0.1;
    r.add("L", lower, Constraint::kLowerFactor);
    MatrixXd upper = th::randn(3, 3, rng).triangularView<Eigen::Upper>();
    r.add("U", upper, Constraint::kUpperTriangular);
    r.add("free", th::randn(2, 2, rng), Constraint::kFree);

    CHECK((r.value("L") - lower).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.value("U") - upper).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.value("pos").array() - 0.7).abs().maxCoeff() < 1e-12);
    for (auto k : {Constraint::kPositive, Constraint::kLowerFactor, Constraint::kFree}) {
      MatrixXd v = k == Constraint::kFree ? th::randn(3, 3, rng) : lower.topLeftCorner(3, 3).eval();
      if (k == Constraint::kPositive) v = v.cwiseAbs().array() + 0.05;
      CHECK((constrain(unconstrain(v, k, 0.0), k, 0.0) - v).cwiseAbs().maxCoeff() < 1e-12);
    }

    for (int t = 0; t < 50; ++t) {
      VectorXd u = r.unconstrained();
      r.set_unconstrained(u + 3.0 * th::randn(u.size(), 1, rng));
      CHECK(r.value("pos").minCoeff() > 0.0);
      CHECK(r.value("L").diagonal().minCoeff() > 0.0);
      CHECK(r.value("L").triangularView<Eigen::StrictlyUpper>().toDenseMatrix().norm() == 0.0);
    }
    ParamRegistry copy = r;
    copy.set_unconstrained(VectorXd::Zero(copy.size()));
    copy.from_json(r.to_json());
    CHECK(copy.unconstrained() == r.unconstrained());
    CHECK_THROWS(r.id("missing"));
  }

  TEST_CASE("adam ignores a zero gradient") {
    Bowl b(VectorXd::Constant(3, 0.5));
    AdamState s;
    const VectorXd before = b.params().unconstrained();
    for (int i = 0; i < 5; ++i) adam_step(b.params(), VectorXd::Zero(3), s, 0.03);
    CHECK(b.params().unconstrained() == before);
  }

  TEST_CASE("adam first step equals the rate") {
    for (double g : {1e-2, 1.0, -250.0}) {
      Bowl b(VectorXd::Constant(1, 1.0));
      AdamState s;
      adam_step(b.params(), VectorXd::Constant(1, g), s, 0.03);
      const double step = b.params().unconstrained()[0] - 1.0;
      CHECK(std::abs(step) == doctest::Approx(0.03).epsilon(1e-6));
      CHECK(step * g < 0);
    }
  }

  TEST_CASE("adam minimizes a quadratic bowl") {
    Bowl b(VectorXd::Constant(1, 1.0));
    Schedule s;
    s.stages = {{500, 0.03}};
    LossTrace t = run_schedule(b, s);
    CHECK(t.size() == 500);
    CHECK(std::abs(b.params().unconstrained()[0]) < 1e-2);
    CHECK(t.back().loss < t.front().loss);
  }

  TEST_CASE("schedules") {
    Schedule d = Schedule::standard();
    REQUIRE(d.stages.size() == 4);
    CHECK(d.total_iterations() == 3200);
    const double rates[] = {0.03, 0.01, 0.003, 0.001};
    for (int i = 0; i < 4; ++i) {
      CHECK(d.stages[i].iterations == 800);
      CHECK(d.stages[i].rate == rates[i]);
    }
    Bowl b(VectorXd::Constant(2, 1.0));
    LossTrace t = run_schedule(b, d);
    CHECK(t.size() == 3200);
    CHECK(t[799].stage == 0);
    CHECK(t[800].stage == 1);
    CHECK(t[3199].rate == 0.001);

    Bowl z(VectorXd::Constant(2, 1.0));
    Schedule empty;
    CHECK(run_schedule(z, empty).empty());
    CHECK(z.params().unconstrained() == VectorXd::Constant(2, 1.0));

    Schedule bad;
    bad.stages = {{0, 0.1}};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad.stages = {{10, -0.1}};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  }

  TEST_CASE("same seed gives the same trace") {
    auto [nz, d] = normalize(th::toy_1d(6, 3, true));
    DeepGPConfig c;
    c.grad_enhanced = true;
    c.samples_train = 3;
    Schedule s;
    s.stages = {{15, 0.03}, {10, 0.01}};
    s.seed = 5;
    DeepGPModel a(d, c), b(d, c);
    LossTrace ta = run_schedule(a, s), tb = run_schedule(b, s);
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].loss == tb[i].loss);
    CHECK(a.params().unconstrained() == b.params().unconstrained());
    s.seed = 6;
    DeepGPModel e(d, c);
    CHECK(run_schedule(e, s).back().loss != ta.back().loss);
  }

  TEST_CASE("constant objective has a zero gradient") {
    Constant c;
    ObjectiveValue v = objective_gradient(c, 0);
    CHECK(v.value == 4.0);
    CHECK(v.gradient.isZero(0.0));
  }

  TEST_CASE("non-finite gradients name the parameter") {
    LogOfFree o;
    try {
      objective_gradient(o, 0);
      FAIL("expected a numerical failure");
    } catch (const NumericalFailure& e) {
      CHECK(std::string(e.what()).find("bad") != std::string::npos);
    }
  }

  TEST_CASE("exact log marginal likelihood gradients") {
    for (bool g : {false, true}) {
      LMCConfig c;
      c.grad_enhanced = g;
      LMCModel m(three_points(g), c);
      std::mt19937_64 rng(92);
      VectorXd u = m.params().unconstrained();
      m.params().set_unconstrained(u + 0.2 * th::randn(u.size(), 1, rng));
      GradientCheck r = check_gradient(m, 0);
      INFO("worst " << r.worst_name);
      CHECK(r.max_rel_error < 1e-4);
    }
  }

  TEST_CASE("training lowers the loss on Branin medium for every family") {
    Datasets raw = branin_datasets(Density::kMedium, 0, true);
    Datasets plain = raw;
    for (auto& ds : plain) ds.G.resize(0, 0);
    Schedule s;
    s.stages = {{150, 0.03}, {100, 0.01}};
    auto check = [](const LossTrace& t) {
      REQUIRE(t.size() >= 200);
      double lead = 0, trail = 0;
      for (int i = 0; i < 100; ++i) {
        lead += t[i].loss;
        trail += t[t.size() - 1 - i].loss;
      }
      CHECK(trail <= lead);
    };
    for (bool g : {false, true}) {
      auto [nz, d] = normalize(g ? raw : plain);
      LMCConfig lc;
      lc.grad_enhanced = g;
      LMCModel lm(d, lc);
      check(train_lmc(lm, s));
      DeepGPConfig dc;
      dc.grad_enhanced = g;
      dc.samples_train = 10;
      DeepGPModel dm(d, dc);
      check(run_schedule(dm, s));
    }
  }
}

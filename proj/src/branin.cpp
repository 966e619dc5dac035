#include "mfgp/data.hpp"
#include "mfgp/error.hpp"
#include "mfgp/optim.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace mfgp {

namespace {

constexpr double kPi = std::numbers::pi;

BraninValue f3(const Eigen::Vector2d& x) {
  const double a = -1.275 / (kPi * kPi);
  const double b = 5.0 / kPi;
  const double c = 10.0 - 5.0 / (4.0 * kPi);
  const double t = a * x[0] * x[0] + b * x[0] + x[1] - 6.0;
  BraninValue r;
  r.value = t * t + c * std::cos(x[0]) + 10.0;
  r.grad[0] = 2.0 * t * (2.0 * a * x[0] + b) - c * std::sin(x[0]);
  r.grad[1] = 2.0 * t;
  return r;
}

BraninValue f2(const Eigen::Vector2d& x) {
  const Eigen::Vector2d shifted = x.array() - 2.0;
  BraninValue inner = f3(shifted);
  if (!(inner.value > 0.0)) {
    std::ostringstream msg;
    msg << "branin level 2: f3(x - 2) = " << inner.value << " is not positive at x = ("
        << x[0] << ", " << x[1] << ")";
    throw DomainError(msg.str());
  }
  const double s = std::sqrt(inner.value);
  BraninValue r;
  r.value = 10.0 * s + 2.0 * (x[0] - 0.5) - 3.0 * (3.0 * x[1] - 1.0) - 1.0;
  r.grad = 5.0 / s * inner.grad;
  r.grad[0] += 2.0;
  r.grad[1] -= 9.0;
  return r;
}

BraninValue f1(const Eigen::Vector2d& x) {
  const Eigen::Vector2d warped = 1.2 * (x.array() + 2.0);
  BraninValue inner = f2(warped);
  BraninValue r;
  r.value = inner.value - 3.0 * x[1] + 1.0;
  r.grad = 1.2 * inner.grad;
  r.grad[1] -= 3.0;
  return r;
}

}  // namespace

BraninValue branin_eval(const Eigen::Vector2d& x, int level) {
  switch (level) {
    case 1: return f1(x);
    case 2: return f2(x);
    case 3: return f3(x);
    default: throw InvalidArgument("branin level must be 1, 2 or 3");
  }
}

Density parse_density(const std::string& s) {
  if (s == "sparse") return Density::kSparse;
  if (s == "medium") return Density::kMedium;
  if (s == "dense") return Density::kDense;
  throw InvalidArgument("unknown density '" + s + "' (sparse|medium|dense)");
}

const char* to_string(Density d) {
  switch (d) {
    case Density::kSparse: return "sparse";
    case Density::kMedium: return "medium";
    case Density::kDense: return "dense";
  }
  return "?";
}

std::array<int, 3> plan_counts(Density d) {
  switch (d) {
    case Density::kSparse: return {20, 10, 5};
    case Density::kMedium: return {40, 20, 10};
    case Density::kDense: return {80, 40, 20};
  }
  return {0, 0, 0};
}

MatrixXd uniform_box(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < 2; ++a)
      x(i, a) = kBraninLower[a] + (kBraninUpper[a] - kBraninLower[a]) * u(rng);
  return x;
}

std::vector<MatrixXd> sample_plan(Density d, std::uint64_t seed) {
  const auto counts = plan_counts(d);
  const double fixed[5][2] = {{-5.0, 0.0}, {10.0, 0.0}, {-5.0, 15.0}, {10.0, 15.0}, {2.5, 7.5}};
  std::vector<MatrixXd> out;
  for (int l = 0; l < 3; ++l) {
    const int n = counts[l];
    MatrixXd x(n, 2);
    for (int i = 0; i < std::min(n, 5); ++i) x.row(i) << fixed[i][0], fixed[i][1];
    if (n > 5) x.bottomRows(n - 5) = uniform_box(n - 5, derive_seed(seed, 101 + l));
    out.push_back(std::move(x));
  }
  return out;
}

Datasets branin_datasets(Density d, std::uint64_t seed, bool with_gradients) {
  auto plan = sample_plan(d, seed);
  Datasets out;
  for (int l = 0; l < 3; ++l) {
    FidelityDataset ds;
    ds.level = l + 1;
    ds.X = plan[l];
    ds.Y.resize(ds.X.rows());
    if (with_gradients) ds.G.resize(ds.X.rows(), 2);
    for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
      BraninValue v = branin_eval(ds.X.row(i).transpose(), l + 1);
      ds.Y[i] = v.value;
      if (with_gradients) ds.G.row(i) = v.grad.transpose();
    }
    ds.meta.push_back(std::string("branin:") + to_string(d));
    out.push_back(std::move(ds));
  }
  return out;
}

Metrics metrics(const VectorXd& pred, const VectorXd& truth) {
  if (pred.size() == 0) throw InvalidArgument("metrics: empty input");
  if (pred.size() != truth.size()) throw InvalidArgument("metrics: length mismatch");
  const VectorXd e = pred - truth;
  Metrics m;
  m.rmse = std::sqrt(e.squaredNorm() / static_cast<double>(e.size()));
  m.mae = e.cwiseAbs().mean();
  return m;
}

}  // namespace mfgp

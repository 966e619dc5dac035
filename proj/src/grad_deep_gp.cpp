#include "mfgp/grad_deep_gp.hpp"

#include "mfgp/error.hpp"
#include "mfgp/gp_exact.hpp"

#include <cmath>

namespace mfgp {

using Eigen::Index;

namespace {

// Row of `x` equal to `p`, or -1.
Index find_row(const MatrixXd& x, const Eigen::RowVectorXd& p) {
  for (Index r = 0; r < x.rows(); ++r)
    if (x.row(r) == p) return r;
  return -1;
}

// Level data at `at`, exact where the point was observed and interpolated elsewhere.
MatrixXd level_values(const FidelityDataset& ds, const MatrixXd& at, bool with_grad) {
  const int d = ds.dim();
  const int w = with_grad ? d + 1 : 1;
  MatrixXd out = fidelity_interpolant(ds, at, with_grad);
  for (Index i = 0; i < at.rows(); ++i) {
    const Index r = find_row(ds.X, at.row(i));
    if (r < 0) continue;
    out(i, 0) = ds.Y[r];
    if (w > 1 && ds.has_gradients()) out.block(i, 1, 1, d) = ds.G.row(r);
  }
  return out;
}

}  // namespace

MatrixXd union_inputs(const Datasets& data) {
  if (data.empty()) return MatrixXd();
  const int d = data.front().dim();
  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& ds : data) {
    for (Index i = 0; i < ds.size(); ++i) {
      bool seen = false;
      for (const auto& r : rows)
        if (r == ds.X.row(i)) {
          seen = true;
          break;
        }
      if (!seen) rows.push_back(ds.X.row(i));
    }
  }
  MatrixXd out(static_cast<Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = rows[i];
  return out;
}

MatrixXd fidelity_interpolant(const FidelityDataset& ds, const MatrixXd& at, bool with_grad) {
  const int d = ds.dim();
  if (at.cols() != d) throw InvalidArgument("interpolant: dimension mismatch");
  const int w = with_grad ? d + 1 : 1;
  if (at.rows() == 0) return MatrixXd(0, w);
  ExactGPModel gp;
  gp.train_inputs = ds.X;
  gp.params = KernelParams(1.0, VectorXd::Ones(d));
  gp.noise = VectorXd::Constant(1, 1e-6);
  gp.grad_enhanced = with_grad && ds.has_gradients();
  if (gp.grad_enhanced) {
    gp.train_targets.resize(ds.size() * (d + 1));
    for (Index i = 0; i < ds.size(); ++i) {
      gp.train_targets[i * (d + 1)] = ds.Y[i];
      gp.train_targets.segment(i * (d + 1) + 1, d) = ds.G.row(i).transpose();
    }
  } else {
    gp.train_targets = ds.Y;
  }
  const VectorXd mean = posterior(gp, at, with_grad).mean;
  MatrixXd out(at.rows(), w);
  for (Index i = 0; i < at.rows(); ++i) out.row(i) = mean.segment(i * w, w).transpose();
  return out;
}

VariationalLayer build_inducing(const Datasets& data, int level, bool with_grad,
                                InducingRegime regime, int dense_m, double init_sq) {
  validate_datasets(data);
  const int levels = max_level(data);
  if (level < 1 || level > levels) throw InvalidArgument("build_inducing: level out of range");
  if (!(init_sq > 0.0)) throw InvalidArgument("build_inducing: init_sq must be positive");
  const int d = data.front().dim();
  const int w = with_grad ? d + 1 : 1;
  const MatrixXd x0 = union_inputs(data);

  MatrixXd z;
  if (regime == InducingRegime::kFullRank) {
    z = level == 1 ? x0 : data[level - 2].X;
  } else {
    if (dense_m < 1) throw InvalidArgument("build_inducing: dense_m must be >= 1");
    const MatrixXd& base = level == 1 ? data[0].X : data[level - 2].X;
    std::vector<Eigen::RowVectorXd> rows;
    for (Index i = 0; i < base.rows() && static_cast<int>(rows.size()) < dense_m; ++i)
      rows.push_back(base.row(i));
    for (Index i = 0; i < x0.rows() && static_cast<int>(rows.size()) < dense_m; ++i) {
      bool seen = false;
      for (const auto& r : rows) seen = seen || r == x0.row(i);
      if (!seen) rows.push_back(x0.row(i));
    }
    z.resize(static_cast<Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) z.row(static_cast<Index>(i)) = rows[i];
  }
  const Index m = z.rows();

  VariationalLayer v;
  v.inducing_base = z;
  v.inducing_prev =
      level == 1 ? MatrixXd(m, 0) : level_values(data[level - 2], z, with_grad);
  const MatrixXd target = level_values(data[level - 1], z, with_grad);
  v.mq.resize(m * w);
  for (Index i = 0; i < m; ++i) v.mq.segment(i * w, w) = target.row(i).transpose();
  v.sq_factor = std::sqrt(init_sq) * MatrixXd::Identity(m * w, m * w);
  v.trainable_inducing = regime == InducingRegime::kDense;
  return v;
}

GaussianBatch grad_layer_conditional(const VariationalLayer& state, const MatrixXd& f_prev,
                                     const MatrixXd& x, const LayerKernelParams& kernel) {
  if (f_prev.cols() != x.cols() + 1)
    throw InvalidArgument("grad layer conditional: f_prev must hold [f, grad f]");
  return layer_conditional(state, f_prev, x, kernel);
}

namespace {

void require_kind(const DeepGPModel& model, bool grad, const char* what) {
  if (model.config().grad_enhanced != grad)
    throw InvalidArgument(std::string(what) + ": model gradient setting does not match");
}

}  // namespace

double dgp_elbo(const DeepGPModel& model, std::uint64_t seed, int samples) {
  require_kind(model, false, "dgp_elbo");
  return model.objective_value(seed, samples, DGPObjective::kElbo);
}

double dgp_pll(const DeepGPModel& model, std::uint64_t seed, int samples) {
  require_kind(model, false, "dgp_pll");
  return model.objective_value(seed, samples, DGPObjective::kPll);
}

double grad_dgp_elbo(const DeepGPModel& model, std::uint64_t seed, int samples) {
  require_kind(model, true, "grad_dgp_elbo");
  return model.objective_value(seed, samples, DGPObjective::kElbo);
}

double grad_dgp_pll(const DeepGPModel& model, std::uint64_t seed, int samples) {
  require_kind(model, true, "grad_dgp_pll");
  return model.objective_value(seed, samples, DGPObjective::kPll);
}

}  // namespace mfgp

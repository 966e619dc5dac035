#include "mfgp/gp_exact.hpp"

#include "mfgp/error.hpp"
#include "mfgp/linalg.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mfgp {

void ExactGPModel::validate() const {
  params.validate();
  if (train_inputs.cols() != params.dim())
    throw InvalidArgument("exact GP: input dimension does not match lengthscales");
  const Eigen::Index n = train_inputs.rows();
  const Eigen::Index expect = grad_enhanced ? n * (params.dim() + 1) : n;
  if (train_targets.size() != expect)
    throw InvalidArgument("exact GP: expected " + std::to_string(expect) + " targets, got " +
                          std::to_string(train_targets.size()));
  if (noise.size() != 1 && noise.size() != 2 && noise.size() != params.dim() + 1)
    throw InvalidArgument("exact GP: noise must have 1, 2 or d+1 entries");
  if ((noise.array() < 0.0).any()) throw InvalidArgument("exact GP: negative noise variance");
}

VectorXd noise_diagonal(const VectorXd& noise, Eigen::Index n, int d, bool want_grad) {
  if (!want_grad) return VectorXd::Constant(n, noise[0]);
  VectorXd per(d + 1);
  for (int c = 0; c <= d; ++c) {
    if (noise.size() == 1)
      per[c] = noise[0];
    else if (noise.size() == 2)
      per[c] = c == 0 ? noise[0] : noise[1];
    else
      per[c] = noise[c];
  }
  return per.replicate(n, 1);
}

MatrixXd assemble_gram(const MatrixXd& x1, const MatrixXd& x2, const KernelParams& params,
                       const VectorXd& noise, bool want_grad) {
  const int d = params.dim();
  if (x1.cols() != d || x2.cols() != d)
    throw InvalidArgument("assemble_gram: input dimension does not match lengthscales");
  const Eigen::Index n1 = x1.rows(), n2 = x2.rows();
  const int k = want_grad ? d + 1 : 1;
  MatrixXd g(n1 * k, n2 * k);
  for (Eigen::Index i = 0; i < n1; ++i) {
    for (Eigen::Index j = 0; j < n2; ++j) {
      if (want_grad)
        g.block(i * k, j * k, k, k) = se_grad_block(x1.row(i).transpose(), x2.row(j).transpose(), params);
      else
        g(i, j) = se_kernel(x1.row(i).transpose(), x2.row(j).transpose(), params);
    }
  }
  const bool same = n1 == n2 && (&x1 == &x2 || x1 == x2);
  if (same && noise.size() > 0) g.diagonal() += noise_diagonal(noise, n1, d, want_grad);
  return g;
}

double log_marginal_likelihood(const ExactGPModel& model) {
  model.validate();
  const MatrixXd& x = model.train_inputs;
  MatrixXd k = assemble_gram(x, x, model.params, model.noise, model.grad_enhanced);
  VectorXd r = model.train_targets;
  if (model.grad_enhanced) {
    const int s = model.params.dim() + 1;
    for (Eigen::Index i = 0; i < x.rows(); ++i) r[i * s] -= model.mean;
  } else {
    r.array() -= model.mean;
  }
  linalg::Cholesky chol = linalg::robust_cholesky(k);
  VectorXd a = linalg::solve_lower(chol.lower, r);
  const double n = static_cast<double>(r.size());
  return -0.5 * a.squaredNorm() - 0.5 * linalg::log_det_from_cholesky(chol.lower) -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

PosteriorGaussian posterior(const ExactGPModel& model, const MatrixXd& xstar, bool want_grad) {
  model.validate();
  const int d = model.params.dim();
  if (xstar.cols() != d) throw InvalidArgument("posterior: query dimension mismatch");
  const MatrixXd& x = model.train_inputs;
  const bool g = model.grad_enhanced;
  const int s = d + 1;

  MatrixXd k = assemble_gram(x, x, model.params, model.noise, g);
  VectorXd r = model.train_targets;
  if (g) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) r[i * s] -= model.mean;
  } else {
    r.array() -= model.mean;
  }

  // Cross covariance train x query, with value-only rows/cols selected as needed.
  MatrixXd kfull = assemble_gram(x, xstar, model.params, VectorXd(), true);
  const Eigen::Index nq = xstar.rows();
  std::vector<Eigen::Index> rows, cols;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (int c = 0; c < (g ? s : 1); ++c) rows.push_back(i * s + c);
  for (Eigen::Index j = 0; j < nq; ++j)
    for (int c = 0; c < (want_grad ? s : 1); ++c) cols.push_back(j * s + c);
  MatrixXd kstar = kfull(rows, cols);
  MatrixXd kss = assemble_gram(xstar, xstar, model.params, VectorXd(), want_grad);

  linalg::Cholesky chol = linalg::robust_cholesky(k);
  MatrixXd a = linalg::solve_lower(chol.lower, kstar);
  VectorXd v = linalg::solve_lower(chol.lower, r);

  PosteriorGaussian out;
  out.mean = a.transpose() * v;
  if (want_grad) {
    for (Eigen::Index j = 0; j < nq; ++j) out.mean[j * s] += model.mean;
  } else {
    out.mean.array() += model.mean;
  }
  out.covariance = kss - a.transpose() * a;
  return out;
}

}  // namespace mfgp

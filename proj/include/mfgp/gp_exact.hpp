#pragma once

#include "mfgp/kernels.hpp"

namespace mfgp {

// noise holds 1, 2 or d+1 variances: a single shared value; value and one
// shared gradient variance; or one per output coordinate.
struct ExactGPModel {
  MatrixXd train_inputs;   // n x d
  VectorXd train_targets;  // n, or n(d+1) point-major when grad_enhanced
  KernelParams params;
  VectorXd noise = VectorXd::Zero(1);
  double mean = 0.0;
  bool grad_enhanced = false;

  void validate() const;
};

struct PosteriorGaussian {
  VectorXd mean;
  MatrixXd covariance;

  VectorXd variance() const { return covariance.diagonal(); }
};

// Per-row noise for a gram over n points (point-major when want_grad).
VectorXd noise_diagonal(const VectorXd& noise, Eigen::Index n, int d, bool want_grad);

// Noise is added on the diagonal only when X1 and X2 are the same point set.
MatrixXd assemble_gram(const MatrixXd& x1, const MatrixXd& x2, const KernelParams& params,
                       const VectorXd& noise, bool want_grad);

double log_marginal_likelihood(const ExactGPModel& model);

// want_grad returns [f, grad f] per query point, point-major.
PosteriorGaussian posterior(const ExactGPModel& model, const MatrixXd& xstar, bool want_grad);

}  // namespace mfgp

#pragma once

#include "mfgp/autodiff.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/optim.hpp"

#include <vector>

namespace mfgp {

// Inducing set and q(U) = N(mq, R R^T) of one layer.
// inducing_prev has 0 columns for a first layer, 1 for a value layer and d+1
// for a gradient layer.
struct VariationalLayer {
  MatrixXd inducing_base;  // m x d
  MatrixXd inducing_prev;  // m x {0, 1, d+1}
  VectorXd mq;
  MatrixXd sq_factor;  // lower triangular
  bool trainable_inducing = false;

  void validate(int width) const;
};

// Per-point means and covariance blocks, point-major with `width` outputs per point.
struct GaussianBatch {
  int width = 1;
  VectorXd mean;
  std::vector<MatrixXd> blocks;

  Eigen::Index points() const { return static_cast<Eigen::Index>(blocks.size()); }
  VectorXd variance() const;
};

double gaussian_kl(const VectorXd& mq, const MatrixXd& factor, const VectorXd& mp,
                   const MatrixXd& kp);

// Conditional of one layer given the gram pieces:
//   mu = m_x + Kxz Kzz^-1 (mq - mz)
//   Sigma_ii = k_ii - a_i^T (Kzz - S) a_i
GaussianBatch conditional_from_grams(const MatrixXd& kzz, const MatrixXd& kzx,
                                     const std::vector<MatrixXd>& kxx_blocks,
                                     const VectorXd& mz, const VectorXd& mx, const VectorXd& mq,
                                     const MatrixXd& factor, int width);

// First-layer conditional: zero mean, SE kernel over x with internal noise.
GaussianBatch layer_conditional(const VariationalLayer& layer, const MatrixXd& x,
                                const KernelParams& kernel, bool with_grad = false);

// Layers >= 2; f_prev is P x 1 (value) or P x (d+1) ([f, grad f]).
GaussianBatch layer_conditional(const VariationalLayer& layer, const MatrixXd& f_prev,
                                const MatrixXd& x, const LayerKernelParams& kernel);

// Closed-form single-layer ELBO with Gaussian likelihood; zero prior mean.
double single_layer_elbo(const VariationalLayer& layer, const MatrixXd& x, const VectorXd& y,
                         const KernelParams& kernel, double noise);

namespace vi {

struct ConditionalInputs {
  ad::Var kzz;       // M x M
  ad::Var kzx;       // M x P
  ad::Var kxx_diag;  // P x 1
  ad::Var mz;        // M x 1
  ad::Var mx;        // P x 1
  ad::Var mq;        // M x 1
  ad::Var factor;    // M x M lower
};

struct Conditional {
  ad::Var mean;  // P x 1
  ad::Var var;   // P x 1 marginal variances
  ad::Var kl;    // 1 x 1
};

Conditional conditional(const ConditionalInputs& in);

// Expected Gaussian log-likelihood sum_i E log N(y_i | f_i, noise_i) under
// independent N(mean_i, var_i); all arguments are n x 1 (noise may be 1 x 1).
ad::Var expected_log_lik(const ad::Var& y, const ad::Var& mean, const ad::Var& var,
                         const ad::Var& noise);

}  // namespace vi

// Trainable single-layer sparse GP on (x, y) with inducing inputs fixed.
class SingleLayerELBO : public Objective {
 public:
  SingleLayerELBO(MatrixXd x, VectorXd y, MatrixXd z, KernelParams kernel, double noise);
  ParamRegistry& params() override { return params_; }
  ad::Var evaluate(ad::Tape& tape, const ParamRegistry::Bound& bound,
                   std::uint64_t seed) override;
  VariationalLayer layer() const;
  KernelParams kernel() const;
  double noise() const;

 private:
  MatrixXd x_, z_;
  VectorXd y_;
  ParamRegistry params_;
};

}  // namespace mfgp

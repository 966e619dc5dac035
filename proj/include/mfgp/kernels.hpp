#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mfgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Squared-exponential kernel over R^d.
struct KernelParams {
  double variance = 1.0;
  VectorXd lengthscales;
  // Internal noise sigma_k^2; only read by deep-GP layer kernels.
  double kernel_noise = 0.0;

  KernelParams() = default;
  KernelParams(double var, VectorXd ls, double knoise = 0.0)
      : variance(var), lengthscales(std::move(ls)), kernel_noise(knoise) {}
  static KernelParams isotropic(int dim, double var, double ls);

  int dim() const { return static_cast<int>(lengthscales.size()); }
  void validate() const;
};

// T upper-triangular L x L factors B_t; coregionalization matrices B_t B_t^T.
struct IndexMixing {
  std::vector<MatrixXd> factors;

  int terms() const { return static_cast<int>(factors.size()); }
  int levels() const { return factors.empty() ? 0 : static_cast<int>(factors[0].rows()); }
  MatrixXd coregionalization(int t) const { return factors[t] * factors[t].transpose(); }
};

// Kernel of a deep-GP layer l >= 2 over (f_prev, x):
//   k_gx(x, x') k_gf(f, f') + k_gamma(x, x') + sigma_k^2 delta
// plus the affine mean kappa f + c.
struct LayerKernelParams {
  KernelParams gx;
  KernelParams gf;     // one lengthscale
  KernelParams gamma;
  double kernel_noise = 0.0;
  double mean_scale = 1.0;
  double mean_offset = 0.0;

  int dim() const { return gx.dim(); }
  void validate() const;
};

// (d+1) x (d+1), ordered [value; d/dx_1 .. d/dx_d].
using GradBlock = MatrixXd;

double se_kernel(const VectorXd& xp, const VectorXd& xq, const KernelParams& p);

// [k, grad_q^T k; grad_p k, grad_p grad_q^T k]
GradBlock se_grad_block(const VectorXd& xp, const VectorXd& xq, const KernelParams& p);

// Fidelity indices are 1-based.
double lmc_cov(const VectorXd& xp, const VectorXd& xq, int i, int j,
               const std::vector<KernelParams>& kp, const IndexMixing& mix);

double dgp_layer_kernel(double fp, const VectorXd& xp, double fq, const VectorXd& xq,
                        const LayerKernelParams& lp, bool same_point);

// fp, fq are [f, grad f] of the previous layer at xp, xq. The derivative
// entries follow the chain rule through f(x) including every product-rule term.
GradBlock dgp_layer_grad_block(const VectorXd& fp, const VectorXd& xp, const VectorXd& fq,
                               const VectorXd& xq, const LayerKernelParams& lp,
                               bool same_point);

// Value case returns a length-1 vector; gradient case [kappa f + c, kappa grad f].
VectorXd dgp_mean(const VectorXd& f_prev, const LayerKernelParams& lp, bool with_grad);

}  // namespace mfgp

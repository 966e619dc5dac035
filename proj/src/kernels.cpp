#include "mfgp/kernels.hpp"

#include "mfgp/error.hpp"

#include <cmath>
#include <string>

namespace mfgp {

namespace {

void check_dims(const VectorXd& xp, const VectorXd& xq, const KernelParams& p) {
  if (xp.size() != p.dim() || xq.size() != p.dim()) {
    throw InvalidArgument("kernel: input dimension " + std::to_string(xp.size()) + "/" +
                          std::to_string(xq.size()) + " does not match " +
                          std::to_string(p.dim()) + " lengthscales");
  }
}

}  // namespace

KernelParams KernelParams::isotropic(int dim, double var, double ls) {
  return KernelParams(var, VectorXd::Constant(dim, ls));
}

void KernelParams::validate() const {
  if (!(variance > 0.0)) throw InvalidArgument("kernel variance must be positive");
  if (lengthscales.size() == 0) throw InvalidArgument("kernel needs at least one lengthscale");
  for (Eigen::Index i = 0; i < lengthscales.size(); ++i)
    if (!(lengthscales[i] > 0.0))
      throw InvalidArgument("lengthscale " + std::to_string(i) + " must be positive");
  if (!(kernel_noise >= 0.0)) throw InvalidArgument("kernel noise must be nonnegative");
}

void LayerKernelParams::validate() const {
  gx.validate();
  gf.validate();
  if (gamma.lengthscales.size() != gx.lengthscales.size())
    throw InvalidArgument("layer kernel: gamma and gx dimensions differ");
  if (!(gamma.variance >= 0.0)) throw InvalidArgument("layer kernel: gamma variance < 0");
  if (gf.dim() != 1) throw InvalidArgument("layer kernel: gf must have one lengthscale");
  if (!(kernel_noise >= 0.0)) throw InvalidArgument("layer kernel: kernel noise < 0");
  if (!std::isfinite(mean_scale) || !std::isfinite(mean_offset))
    throw InvalidArgument("layer kernel: mean parameters must be finite");
}

double se_kernel(const VectorXd& xp, const VectorXd& xq, const KernelParams& p) {
  check_dims(xp, xq, p);
  const double r2 = ((xp - xq).array() / p.lengthscales.array()).square().sum();
  return p.variance * std::exp(-0.5 * r2);
}

GradBlock se_grad_block(const VectorXd& xp, const VectorXd& xq, const KernelParams& p) {
  check_dims(xp, xq, p);
  const int d = p.dim();
  const VectorXd il2 = p.lengthscales.array().square().inverse();
  const VectorXd e = (xp - xq).cwiseProduct(il2);
  const double k = se_kernel(xp, xq, p);
  GradBlock b(d + 1, d + 1);
  b(0, 0) = k;
  for (int a = 0; a < d; ++a) {
    b(0, a + 1) = e[a] * k;
    b(a + 1, 0) = -e[a] * k;
  }
  b.bottomRightCorner(d, d) = (MatrixXd(il2.asDiagonal()) - e * e.transpose()) * k;
  return b;
}

double lmc_cov(const VectorXd& xp, const VectorXd& xq, int i, int j,
               const std::vector<KernelParams>& kp, const IndexMixing& mix) {
  if (kp.size() != mix.factors.size())
    throw InvalidArgument("lmc: kernel count differs from mixing factor count");
  const int levels = mix.levels();
  if (i < 1 || j < 1 || i > levels || j > levels)
    throw InvalidArgument("lmc: fidelity index out of range 1.." + std::to_string(levels));
  double out = 0.0;
  for (std::size_t t = 0; t < kp.size(); ++t) {
    const MatrixXd& b = mix.factors[t];
    const double bij = b.row(i - 1).dot(b.row(j - 1));
    out += se_kernel(xp, xq, kp[t]) * bij;
  }
  return out;
}

double dgp_layer_kernel(double fp, const VectorXd& xp, double fq, const VectorXd& xq,
                        const LayerKernelParams& lp, bool same_point) {
  VectorXd a(1), b(1);
  a[0] = fp;
  b[0] = fq;
  double k = se_kernel(xp, xq, lp.gx) * se_kernel(a, b, lp.gf) + se_kernel(xp, xq, lp.gamma);
  if (same_point) k += lp.kernel_noise;
  return k;
}

GradBlock dgp_layer_grad_block(const VectorXd& fp, const VectorXd& xp, const VectorXd& fq,
                               const VectorXd& xq, const LayerKernelParams& lp,
                               bool same_point) {
  const int d = lp.dim();
  if (fp.size() != d + 1 || fq.size() != d + 1)
    throw InvalidArgument("layer grad block: expected [f, grad f] of length " +
                          std::to_string(d + 1));
  const GradBlock kx = se_grad_block(xp, xq, lp.gx);
  const GradBlock kg = se_grad_block(xp, xq, lp.gamma);

  // Derivatives of k_gf(f(xp), f(xq)) with respect to xp and xq.
  const double lf2 = lp.gf.lengthscales[0] * lp.gf.lengthscales[0];
  VectorXd a(1), b(1);
  a[0] = fp[0];
  b[0] = fq[0];
  const double kf = se_kernel(a, b, lp.gf);
  const double ef = (fp[0] - fq[0]) / lf2;
  const VectorXd gp = fp.tail(d), gq = fq.tail(d);
  GradBlock kfb(d + 1, d + 1);
  kfb(0, 0) = kf;
  kfb.block(0, 1, 1, d) = (ef * kf) * gq.transpose();
  kfb.block(1, 0, d, 1) = (-ef * kf) * gp;
  kfb.bottomRightCorner(d, d) = ((1.0 / lf2 - ef * ef) * kf) * (gp * gq.transpose());

  // Product rule for k1 * kf over the block layout.
  GradBlock out(d + 1, d + 1);
  out(0, 0) = kx(0, 0) * kfb(0, 0);
  for (int j = 1; j <= d; ++j) {
    out(0, j) = kx(0, j) * kf + kx(0, 0) * kfb(0, j);
    out(j, 0) = kx(j, 0) * kf + kx(0, 0) * kfb(j, 0);
  }
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j)
      out(i, j) = kx(i, j) * kf + kx(i, 0) * kfb(0, j) + kx(0, j) * kfb(i, 0) +
                  kx(0, 0) * kfb(i, j);
  out += kg;
  if (same_point) out.diagonal().array() += lp.kernel_noise;
  return out;
}

VectorXd dgp_mean(const VectorXd& f_prev, const LayerKernelParams& lp, bool with_grad) {
  if (!with_grad) {
    if (f_prev.size() < 1) throw InvalidArgument("dgp_mean: empty input");
    VectorXd out(1);
    out[0] = lp.mean_scale * f_prev[0] + lp.mean_offset;
    return out;
  }
  VectorXd out = lp.mean_scale * f_prev;
  out[0] += lp.mean_offset;
  return out;
}

}  // namespace mfgp

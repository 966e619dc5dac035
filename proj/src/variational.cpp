#include "mfgp/variational.hpp"

#include "mfgp/error.hpp"
#include "mfgp/gp_exact.hpp"
#include "mfgp/kernel_grams.hpp"
#include "mfgp/linalg.hpp"

#include <cmath>
#include <numbers>

namespace mfgp {

using namespace mfgp::ad;

void VariationalLayer::validate(int width) const {
  const Eigen::Index m = inducing_base.rows();
  if (inducing_prev.rows() != m && inducing_prev.cols() > 0)
    throw InvalidArgument("variational layer: inducing_prev row count mismatch");
  if (mq.size() != m * width)
    throw InvalidArgument("variational layer: mq has " + std::to_string(mq.size()) +
                          " entries, expected " + std::to_string(m * width));
  if (sq_factor.rows() != mq.size() || sq_factor.cols() != mq.size())
    throw InvalidArgument("variational layer: S_q factor shape mismatch");
}

VectorXd GaussianBatch::variance() const {
  VectorXd out(points() * width);
  for (Eigen::Index i = 0; i < points(); ++i) out.segment(i * width, width) = blocks[i].diagonal();
  return out;
}

double gaussian_kl(const VectorXd& mq, const MatrixXd& factor, const VectorXd& mp,
                   const MatrixXd& kp) {
  const Eigen::Index m = mq.size();
  if (mp.size() != m || kp.rows() != m || kp.cols() != m || factor.rows() != m ||
      factor.cols() != m)
    throw InvalidArgument("gaussian_kl: dimension mismatch");
  linalg::Cholesky chol = linalg::robust_cholesky(kp);
  const MatrixXd r = factor.triangularView<Eigen::Lower>();
  MatrixXd w = linalg::solve_lower(chol.lower, r);
  VectorXd v = linalg::solve_lower(chol.lower, mq - mp);
  const double kl = 0.5 * (w.squaredNorm() + v.squaredNorm() - static_cast<double>(m)) +
                    chol.lower.diagonal().array().log().sum() -
                    r.diagonal().array().abs().log().sum();
  return std::max(kl, 0.0);
}

GaussianBatch conditional_from_grams(const MatrixXd& kzz, const MatrixXd& kzx,
                                     const std::vector<MatrixXd>& kxx_blocks,
                                     const VectorXd& mz, const VectorXd& mx, const VectorXd& mq,
                                     const MatrixXd& factor, int width) {
  const Eigen::Index m = kzz.rows();
  const Eigen::Index p = static_cast<Eigen::Index>(kxx_blocks.size());
  if (kzx.rows() != m || kzx.cols() != p * width || mx.size() != p * width || mz.size() != m ||
      mq.size() != m)
    throw InvalidArgument("conditional: dimension mismatch");
  linalg::Cholesky chol = linalg::robust_cholesky(kzz);
  MatrixXd a = linalg::solve_lower(chol.lower, kzx);
  MatrixXd w = linalg::solve_lower(chol.lower, MatrixXd(factor.triangularView<Eigen::Lower>()));
  VectorXd v = linalg::solve_lower(chol.lower, mq - mz);
  MatrixXd b = w.transpose() * a;

  GaussianBatch out;
  out.width = width;
  out.mean = mx + a.transpose() * v;
  for (Eigen::Index i = 0; i < p; ++i) {
    auto ai = a.middleCols(i * width, width);
    auto bi = b.middleCols(i * width, width);
    MatrixXd blk = kxx_blocks[i] - ai.transpose() * ai + bi.transpose() * bi;
    out.blocks.push_back(0.5 * (blk + blk.transpose()));
  }
  return out;
}

GaussianBatch layer_conditional(const VariationalLayer& layer, const MatrixXd& x,
                                const KernelParams& kernel, bool with_grad) {
  const int d = kernel.dim();
  const int w = with_grad ? d + 1 : 1;
  layer.validate(w);
  VectorXd knoise = VectorXd::Constant(1, kernel.kernel_noise);
  MatrixXd kzz = assemble_gram(layer.inducing_base, layer.inducing_base, kernel, knoise, with_grad);
  MatrixXd kzx = assemble_gram(layer.inducing_base, x, kernel, VectorXd(), with_grad);
  std::vector<MatrixXd> kxx;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const VectorXd xi = x.row(i).transpose();
    MatrixXd blk = with_grad ? se_grad_block(xi, xi, kernel)
                             : MatrixXd::Constant(1, 1, se_kernel(xi, xi, kernel));
    blk.diagonal().array() += kernel.kernel_noise;
    kxx.push_back(std::move(blk));
  }
  return conditional_from_grams(kzz, kzx, kxx, VectorXd::Zero(kzz.rows()),
                                VectorXd::Zero(x.rows() * w), layer.mq, layer.sq_factor, w);
}

GaussianBatch layer_conditional(const VariationalLayer& layer, const MatrixXd& f_prev,
                                const MatrixXd& x, const LayerKernelParams& kernel) {
  const int d = kernel.dim();
  const bool g = f_prev.cols() == d + 1 && f_prev.cols() > 1;
  if (!g && f_prev.cols() != 1)
    throw InvalidArgument("layer conditional: f_prev must have 1 or d+1 columns");
  if (f_prev.rows() != x.rows()) throw InvalidArgument("layer conditional: batch size mismatch");
  if (layer.inducing_prev.cols() != f_prev.cols())
    throw InvalidArgument("layer conditional: inducing_prev width mismatch");
  const int w = g ? d + 1 : 1;
  layer.validate(w);
  const Eigen::Index m = layer.inducing_base.rows(), p = x.rows();

  auto block = [&](const VectorXd& fa, const VectorXd& xa, const VectorXd& fb,
                   const VectorXd& xb, bool same) -> MatrixXd {
    if (g) return dgp_layer_grad_block(fa, xa, fb, xb, kernel, same);
    return MatrixXd::Constant(1, 1, dgp_layer_kernel(fa[0], xa, fb[0], xb, kernel, same));
  };
  MatrixXd kzz(m * w, m * w), kzx(m * w, p * w);
  VectorXd mz(m * w), mx(p * w);
  for (Eigen::Index i = 0; i < m; ++i) {
    const VectorXd fi = layer.inducing_prev.row(i).transpose();
    const VectorXd zi = layer.inducing_base.row(i).transpose();
    mz.segment(i * w, w) = dgp_mean(fi, kernel, g);
    for (Eigen::Index j = 0; j < m; ++j)
      kzz.block(i * w, j * w, w, w) = block(fi, zi, layer.inducing_prev.row(j).transpose(),
                                            layer.inducing_base.row(j).transpose(), i == j);
    for (Eigen::Index j = 0; j < p; ++j)
      kzx.block(i * w, j * w, w, w) =
          block(fi, zi, f_prev.row(j).transpose(), x.row(j).transpose(), false);
  }
  std::vector<MatrixXd> kxx;
  for (Eigen::Index j = 0; j < p; ++j) {
    const VectorXd fj = f_prev.row(j).transpose();
    const VectorXd xj = x.row(j).transpose();
    mx.segment(j * w, w) = dgp_mean(fj, kernel, g);
    kxx.push_back(block(fj, xj, fj, xj, true));
  }
  return conditional_from_grams(kzz, kzx, kxx, mz, mx, layer.mq, layer.sq_factor, w);
}

double single_layer_elbo(const VariationalLayer& layer, const MatrixXd& x, const VectorXd& y,
                         const KernelParams& kernel, double noise) {
  if (!(noise > 0.0)) throw InvalidArgument("single_layer_elbo: noise must be positive");
  if (y.size() != x.rows()) throw InvalidArgument("single_layer_elbo: x/y length mismatch");
  VectorXd knoise = VectorXd::Constant(1, kernel.kernel_noise);
  MatrixXd kzz = assemble_gram(layer.inducing_base, layer.inducing_base, kernel, knoise, false);
  const double kl = gaussian_kl(layer.mq, layer.sq_factor, VectorXd::Zero(kzz.rows()), kzz);
  if (x.rows() == 0) return -kl;
  GaussianBatch q = layer_conditional(layer, x, kernel, false);
  const VectorXd var = q.variance();
  double rec = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double r = y[i] - q.mean[i];
    rec += -0.5 * std::log(2.0 * std::numbers::pi * noise) - (r * r + var[i]) / (2.0 * noise);
  }
  return rec - kl;
}

namespace vi {

Conditional conditional(const ConditionalInputs& in) {
  Var l = cholesky(in.kzz);
  Var w = solve_lower(l, in.factor);
  Var v = solve_lower(l, in.mq - in.mz);
  Var a = solve_lower(l, in.kzx);
  Var b = matmul(transpose(w), a);
  Conditional out;
  out.mean = in.mx + transpose(matmul(transpose(v), a));
  out.var = in.kxx_diag - transpose(col_sums(square(a))) + transpose(col_sums(square(b)));
  const double m = static_cast<double>(in.mq.rows());
  out.kl = 0.5 * (sum(square(w)) + sum(square(v))) + log_diag_sum(l) - log_diag_sum(in.factor) +
           (-0.5 * m);
  return out;
}

Var expected_log_lik(const Var& y, const Var& mean, const Var& var, const Var& noise) {
  const Index n = y.rows();
  Var nz = noise.rows() == 1 && n != 1 ? grams::broadcast(noise, n) : noise;
  Var resid = square(y - mean) + var;
  Var terms = -0.5 * log((2.0 * std::numbers::pi) * nz) - 0.5 * cwise_div(resid, nz);
  return sum(terms);
}

}  // namespace vi

SingleLayerELBO::SingleLayerELBO(MatrixXd x, VectorXd y, MatrixXd z, KernelParams kernel,
                                 double noise)
    : x_(std::move(x)), z_(std::move(z)), y_(std::move(y)) {
  kernel.validate();
  params_.add("variance", MatrixXd::Constant(1, 1, kernel.variance), Constraint::kPositive);
  params_.add("lengthscales", MatrixXd(kernel.lengthscales), Constraint::kPositive);
  params_.add("noise", MatrixXd::Constant(1, 1, noise), Constraint::kPositive);
  const Eigen::Index m = z_.rows();
  params_.add("mq", MatrixXd::Zero(m, 1), Constraint::kFree);
  params_.add("sq_factor", MatrixXd::Identity(m, m), Constraint::kLowerFactor);
}

Var SingleLayerELBO::evaluate(Tape& tape, const ParamRegistry::Bound& b, std::uint64_t) {
  grams::SEVars k{b[params_.id("variance")], b[params_.id("lengthscales")]};
  grams::Coords zc = grams::constant_columns(tape, z_);
  grams::Coords xc = grams::constant_columns(tape, x_);
  Var zero = tape.constant(0.0);
  vi::ConditionalInputs in;
  in.kzz = grams::se_gram(k, zc, zc);
  in.kzx = grams::se_gram(k, zc, xc);
  in.kxx_diag = grams::se_diag(k, zero, x_.rows());
  in.mz = tape.constant(Matrix::Zero(z_.rows(), 1));
  in.mx = tape.constant(Matrix::Zero(x_.rows(), 1));
  in.mq = b[params_.id("mq")];
  in.factor = b[params_.id("sq_factor")];
  vi::Conditional c = vi::conditional(in);
  Var rec = vi::expected_log_lik(tape.constant(Matrix(y_)), c.mean, c.var,
                                 b[params_.id("noise")]);
  return rec - c.kl;
}

VariationalLayer SingleLayerELBO::layer() const {
  VariationalLayer l;
  l.inducing_base = z_;
  l.inducing_prev = MatrixXd(z_.rows(), 0);
  l.mq = params_.value("mq");
  l.sq_factor = params_.value("sq_factor");
  return l;
}

KernelParams SingleLayerELBO::kernel() const {
  return KernelParams(params_.scalar("variance"), VectorXd(params_.value("lengthscales")));
}

double SingleLayerELBO::noise() const { return params_.scalar("noise"); }

}  // namespace mfgp

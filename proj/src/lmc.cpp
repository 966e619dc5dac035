#include "mfgp/lmc.hpp"

#include "mfgp/error.hpp"
#include "mfgp/kernel_grams.hpp"
#include "mfgp/linalg.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace mfgp {

using namespace mfgp::ad;

TaggedInputs stack_inputs(const Datasets& data) {
  TaggedInputs out;
  Eigen::Index n = 0;
  for (const auto& ds : data) n += ds.size();
  const int d = data.empty() ? 0 : data.front().dim();
  out.X.resize(n, d);
  Eigen::Index r = 0;
  for (const auto& ds : data) {
    out.X.middleRows(r, ds.size()) = ds.X;
    for (Eigen::Index i = 0; i < ds.size(); ++i) out.level.push_back(ds.level);
    r += ds.size();
  }
  return out;
}

MatrixXd compute_k_lmc(const TaggedInputs& a, const TaggedInputs& b,
                       const std::vector<KernelParams>& kernels, const IndexMixing& mix,
                       bool grad_a, bool grad_b) {
  if (kernels.empty() || kernels.size() != mix.factors.size())
    throw InvalidArgument("lmc: need one mixing factor per kernel term");
  const int d = kernels[0].dim();
  if (a.X.cols() != d || b.X.cols() != d) throw InvalidArgument("lmc: input dimension mismatch");
  const int levels = mix.levels();
  for (int l : a.level)
    if (l < 1 || l > levels) throw InvalidArgument("lmc: fidelity tag out of range");
  for (int l : b.level)
    if (l < 1 || l > levels) throw InvalidArgument("lmc: fidelity tag out of range");
  const int ka = grad_a ? d + 1 : 1, kb = grad_b ? d + 1 : 1;
  std::vector<MatrixXd> coreg;
  for (int t = 0; t < mix.terms(); ++t) coreg.push_back(mix.coregionalization(t));

  MatrixXd out = MatrixXd::Zero(a.size() * ka, b.size() * kb);
  const bool any_grad = grad_a || grad_b;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const VectorXd xi = a.X.row(i).transpose();
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const VectorXd xj = b.X.row(j).transpose();
      for (std::size_t t = 0; t < kernels.size(); ++t) {
        const double c = coreg[t](a.level[i] - 1, b.level[j] - 1);
        if (any_grad) {
          GradBlock g = se_grad_block(xi, xj, kernels[t]);
          out.block(i * ka, j * kb, ka, kb) += c * g.topLeftCorner(ka, kb);
        } else {
          out(i, j) += c * se_kernel(xi, xj, kernels[t]);
        }
      }
    }
  }
  return out;
}

LMCModel::LMCModel(Datasets data, LMCConfig config) : config_(config), data_(std::move(data)) {
  validate_datasets(data_);
  levels_ = max_level(data_);
  dim_ = data_.front().dim();
  terms_ = config_.terms > 0 ? config_.terms : levels_;
  if (config_.grad_enhanced && !all_have_gradients(data_))
    throw InvalidArgument("gradient-enhanced LMC needs gradients for every fidelity");
  inputs_ = stack_inputs(data_);
  if (inputs_.size() < 2) throw InvalidArgument("LMC needs at least two training points");

  const int s = config_.grad_enhanced ? dim_ + 1 : 1;
  targets_.resize(inputs_.size() * s);
  Eigen::Index r = 0;
  for (const auto& ds : data_) {
    for (Eigen::Index i = 0; i < ds.size(); ++i, ++r) {
      targets_[r * s] = ds.Y[i];
      if (config_.grad_enhanced)
        for (int a = 0; a < dim_; ++a) targets_[r * s + 1 + a] = ds.G(i, a);
    }
  }

  std::mt19937_64 rng(derive_seed(config_.seed, 7));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < terms_; ++t) {
    const std::string p = "lmc.k" + std::to_string(t);
    id_var_.push_back(params_.add(p + ".variance", MatrixXd::Ones(1, 1), Constraint::kPositive));
    params_.set_trainable(p + ".variance", false);
    id_ls_.push_back(params_.add(p + ".lengthscales",
                                 MatrixXd::Constant(dim_, 1, config_.init_lengthscale),
                                 Constraint::kPositive));
    MatrixXd b = MatrixXd::Identity(levels_, levels_);
    for (int j = 0; j < levels_; ++j)
      for (int i = 0; i <= j; ++i) b(i, j) += config_.mixing_jitter * u(rng);
    id_b_.push_back(params_.add("lmc.B" + std::to_string(t), b, Constraint::kUpperTriangular));
  }
  const int nn = config_.per_fidelity_noise ? levels_ : 1;
  id_noise_ = params_.add("lmc.noise",
                          MatrixXd::Constant(nn, 1, config_.init_noise + config_.noise_floor),
                          Constraint::kPositive, config_.noise_floor);
  if (config_.grad_enhanced)
    id_gnoise_ = params_.add("lmc.grad_noise",
                             MatrixXd::Constant(1, 1, config_.init_grad_noise + config_.noise_floor),
                             Constraint::kPositive, config_.noise_floor);
}

Var LMCModel::evaluate(Tape& tape, const ParamRegistry::Bound& bound, std::uint64_t) {
  const bool g = config_.grad_enhanced;
  const int s = g ? dim_ + 1 : 1;
  const Eigen::Index rows = inputs_.size() * s;
  IndexList lev(rows);
  for (Eigen::Index i = 0; i < inputs_.size(); ++i)
    for (int c = 0; c < s; ++c) lev[i * s + c] = inputs_.level[i] - 1;

  grams::Coords x = grams::constant_columns(tape, inputs_.X);
  Var k;
  for (int t = 0; t < terms_; ++t) {
    grams::SEVars p{bound[id_var_[t]], bound[id_ls_[t]]};
    Var gram = g ? grams::se_grad_gram(p, x, x) : grams::se_gram(p, x, x);
    const Var& b = bound[id_b_[t]];
    Var coreg = gather2d(matmul(b, transpose(b)), lev, lev);
    Var term = cwise_mul(coreg, gram);
    k = t == 0 ? term : k + term;
  }

  // Noise per row: value rows pick their fidelity's entry, gradient rows the shared one.
  const Var& noise = bound[id_noise_];
  Matrix sel = Matrix::Zero(rows, noise.rows());
  Matrix gsel = Matrix::Zero(rows, 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (r % s == 0)
      sel(r, noise.rows() == 1 ? 0 : lev[r]) = 1.0;
    else
      gsel(r, 0) = 1.0;
  }
  Var nd = matmul(tape.constant(sel), noise);
  if (g) nd = nd + matmul(tape.constant(gsel), bound[id_gnoise_]);
  k = add_diag(k, nd);

  Var l = cholesky(k);
  Var a = solve_lower(l, tape.constant(Matrix(targets_)));
  const double n = static_cast<double>(rows);
  return add_scalar(-0.5 * sum(square(a)) - log_diag_sum(l),
                    tape.constant(-0.5 * n * std::log(2.0 * std::numbers::pi)));
}

std::vector<KernelParams> LMCModel::kernels() const {
  std::vector<KernelParams> out;
  for (int t = 0; t < terms_; ++t)
    out.emplace_back(params_.value(id_var_[t])(0, 0), VectorXd(params_.value(id_ls_[t])));
  return out;
}

IndexMixing LMCModel::mixing() const {
  IndexMixing m;
  for (int t = 0; t < terms_; ++t) m.factors.push_back(params_.value(id_b_[t]));
  return m;
}

void LMCModel::set_mixing(const IndexMixing& mix) {
  if (mix.terms() != terms_) throw InvalidArgument("set_mixing: wrong number of factors");
  for (int t = 0; t < terms_; ++t) params_.set_value(id_b_[t], mix.factors[t]);
}

VectorXd LMCModel::noise_diagonal() const {
  const int s = config_.grad_enhanced ? dim_ + 1 : 1;
  const MatrixXd noise = params_.value(id_noise_);
  const double gnoise = config_.grad_enhanced ? params_.value(id_gnoise_)(0, 0) : 0.0;
  VectorXd out(inputs_.size() * s);
  for (Eigen::Index i = 0; i < inputs_.size(); ++i) {
    out[i * s] = noise.rows() == 1 ? noise(0, 0) : noise(inputs_.level[i] - 1, 0);
    for (int c = 1; c < s; ++c) out[i * s + c] = gnoise;
  }
  return out;
}

double LMCModel::log_marginal_likelihood() const {
  const bool g = config_.grad_enhanced;
  MatrixXd k = compute_k_lmc(inputs_, inputs_, kernels(), mixing(), g, g);
  k.diagonal() += noise_diagonal();
  linalg::Cholesky chol = linalg::robust_cholesky(k);
  VectorXd a = linalg::solve_lower(chol.lower, targets_);
  return -0.5 * a.squaredNorm() - 0.5 * linalg::log_det_from_cholesky(chol.lower) -
         0.5 * static_cast<double>(targets_.size()) * std::log(2.0 * std::numbers::pi);
}

PosteriorGaussian LMCModel::predict(const MatrixXd& xstar, int target_fidelity) const {
  const int target = target_fidelity > 0 ? target_fidelity : levels_;
  if (target > levels_) throw InvalidArgument("predict: target fidelity out of range");
  if (xstar.cols() != dim_) throw InvalidArgument("predict: query dimension mismatch");
  const bool g = config_.grad_enhanced;
  const auto kp = kernels();
  const IndexMixing mix = mixing();
  MatrixXd k = compute_k_lmc(inputs_, inputs_, kp, mix, g, g);
  k.diagonal() += noise_diagonal();
  TaggedInputs q{xstar, std::vector<int>(xstar.rows(), target)};
  MatrixXd ks = compute_k_lmc(inputs_, q, kp, mix, g, false);

  linalg::Cholesky chol = linalg::robust_cholesky(k);
  MatrixXd a = linalg::solve_lower(chol.lower, ks);
  VectorXd v = linalg::solve_lower(chol.lower, targets_);

  double prior = 0.0;
  for (int t = 0; t < terms_; ++t)
    prior += kp[t].variance * mix.coregionalization(t)(target - 1, target - 1);
  PosteriorGaussian out;
  out.mean = a.transpose() * v;
  out.covariance = MatrixXd::Zero(xstar.rows(), xstar.rows());
  out.covariance.diagonal() =
      (VectorXd::Constant(xstar.rows(), prior) - a.colwise().squaredNorm().transpose())
          .cwiseMax(0.0);
  return out;
}

LossTrace train_lmc(LMCModel& model, const Schedule& schedule) {
  return run_schedule(model, schedule);
}

}  // namespace mfgp

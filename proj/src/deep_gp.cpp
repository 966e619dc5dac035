#include "mfgp/deep_gp.hpp"

#include "mfgp/error.hpp"
#include "mfgp/grad_deep_gp.hpp"
#include "mfgp/kernel_grams.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mfgp {

using namespace mfgp::ad;
using grams::Coords;

namespace {

Matrix normal_matrix(Index rows, Index cols, std::uint64_t seed) {
  Matrix out(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    std::normal_distribution<double> n(0.0, 1.0);
    for (Index i = 0; i < rows; ++i) out(i, j) = n(rng);
  }
  return out;
}

Matrix value_mask(Index points, int w) {
  Matrix m = Matrix::Zero(points * w, 1);
  for (Index i = 0; i < points; ++i) m(i * w, 0) = 1.0;
  return m;
}

MatrixXd rows_of(const MatrixXd& x, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = x.row(rows[r]);
  return out;
}

}  // namespace

const char* to_string(DGPObjective o) { return o == DGPObjective::kElbo ? "elbo" : "pll"; }

DGPObjective parse_dgp_objective(const std::string& s) {
  if (s == "elbo") return DGPObjective::kElbo;
  if (s == "pll") return DGPObjective::kPll;
  throw InvalidArgument("unknown deep GP objective '" + s + "' (elbo|pll)");
}

void DeepGPConfig::validate() const {
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
  if (samples_train < 1 || samples_predict < 1)
    throw InvalidArgument("Monte Carlo sample counts must be >= 1");
  if (inducing == InducingRegime::kDense && dense_m < 1)
    throw InvalidArgument("dense regime needs m >= 1 inducing points");
  if (!(init_sq > 0.0) || !(init_noise > 0.0) || !(init_kernel_noise > 0.0))
    throw InvalidArgument("initial variances must be positive");
}

VectorXd MixturePosterior::mean() const { return means.rowwise().mean(); }

VectorXd MixturePosterior::variance() const {
  if (means.cols() == 0) return VectorXd();
  const VectorXd mu = mean();
  const VectorXd spread = (means.colwise() - mu).array().square().rowwise().mean();
  return variances.rowwise().mean() + spread;
}

VectorXd sample_layer(const GaussianBatch& batch, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  VectorXd out(batch.mean.size());
  for (Index i = 0; i < batch.points(); ++i) {
    for (int c = 0; c < batch.width; ++c) {
      double v = batch.blocks[i](c, c);
      if (v < -1e-12)
        throw NumericalFailure("sample_layer: negative variance " + std::to_string(v) +
                               " at point " + std::to_string(i));
      v = std::max(v, 0.0);
      const Index r = i * batch.width + c;
      out[r] = batch.mean[r] + n(rng) * std::sqrt(v);
    }
  }
  return out;
}

VectorXd grad_sample_layer(const GaussianBatch& batch, std::mt19937_64& rng) {
  return sample_layer(batch, rng);
}

DeepGPModel::DeepGPModel(Datasets data, DeepGPConfig config)
    : config_(config), data_(std::move(data)) {
  config_.validate();
  validate_datasets(data_);
  levels_ = max_level(data_);
  dim_ = data_.front().dim();
  for (const auto& ds : data_)
    if (ds.size() == 0)
      throw InvalidArgument("deep GP: level " + std::to_string(ds.level) + " has no data");
  width_ = config_.grad_enhanced ? dim_ + 1 : 1;
  use_grad_lik_ = config_.grad_enhanced && !config_.mask_gradients;
  build_union();
  init_params();
}

void DeepGPModel::build_union() {
  x0_ = mfgp::union_inputs(data_);
  fid_index_.assign(levels_, {});
  for (int l = 0; l < levels_; ++l) {
    for (Index i = 0; i < data_[l].size(); ++i) {
      for (Index r = 0; r < x0_.rows(); ++r) {
        if (x0_.row(r) == data_[l].X.row(i)) {
          fid_index_[l].push_back(r);
          break;
        }
      }
    }
  }
  // Layer l is only needed at points observed at levels >= l.
  train_active_.assign(levels_, {});
  std::vector<Index> acc;
  for (int l = levels_ - 1; l >= 0; --l) {
    acc.insert(acc.end(), fid_index_[l].begin(), fid_index_[l].end());
    std::sort(acc.begin(), acc.end());
    acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
    train_active_[l] = acc;
  }
}

void DeepGPModel::init_params() {
  const int d = dim_;
  const auto c = config_;
  ids_.assign(levels_, {});
  for (int l = 1; l <= levels_; ++l) {
    LayerIds& id = ids_[l - 1];
    const std::string p = "l" + std::to_string(l) + ".";
    VariationalLayer v =
        build_inducing(data_, l, config_.grad_enhanced, c.inducing, c.dense_m, c.init_sq);
    const bool dense = c.inducing == InducingRegime::kDense;
    if (l == 1) {
      id.var = params_.add(p + "variance", MatrixXd::Ones(1, 1), Constraint::kPositive);
      id.ls = params_.add(p + "lengthscales", MatrixXd::Constant(d, 1, c.init_lengthscale),
                          Constraint::kPositive);
    } else {
      id.gx_var = params_.add(p + "gx.variance", MatrixXd::Ones(1, 1), Constraint::kPositive);
      id.gx_ls = params_.add(p + "gx.lengthscales", MatrixXd::Constant(d, 1, c.init_lengthscale),
                             Constraint::kPositive);
      id.gf_var = params_.add(p + "gf.variance", MatrixXd::Ones(1, 1), Constraint::kPositive);
      params_.set_trainable(p + "gf.variance", false);
      id.gf_ls = params_.add(p + "gf.lengthscale", MatrixXd::Constant(1, 1, c.init_gf_lengthscale),
                             Constraint::kPositive);
      id.gm_var = params_.add(p + "gamma.variance",
                              MatrixXd::Constant(1, 1, c.init_gamma_variance),
                              Constraint::kPositive);
      id.gm_ls = params_.add(p + "gamma.lengthscales",
                             MatrixXd::Constant(d, 1, c.init_lengthscale), Constraint::kPositive);
      id.kappa = params_.add(p + "kappa", MatrixXd::Ones(1, 1), Constraint::kFree);
      id.offset = params_.add(p + "c", MatrixXd::Zero(1, 1), Constraint::kFree);
    }
    id.knoise = params_.add(p + "kernel_noise",
                            MatrixXd::Constant(1, 1, c.init_kernel_noise + c.kernel_noise_floor),
                            Constraint::kPositive, c.kernel_noise_floor);
    id.noise = params_.add(p + "noise", MatrixXd::Constant(1, 1, c.init_noise + c.noise_floor),
                           Constraint::kPositive, c.noise_floor);
    if (config_.grad_enhanced)
      id.gnoise = params_.add(p + "grad_noise",
                              MatrixXd::Constant(1, 1, c.init_grad_noise + c.noise_floor),
                              Constraint::kPositive, c.noise_floor);
    id.z = params_.add(p + "Z", v.inducing_base, Constraint::kFree);
    params_.set_trainable(p + "Z", dense);
    if (l > 1) {
      id.zprev = params_.add(p + "zprev", v.inducing_prev, Constraint::kFree);
      params_.set_trainable(p + "zprev", dense);
    }
    id.mq = params_.add(p + "mq", MatrixXd(v.mq), Constraint::kFree);
    id.sq = params_.add(p + "sq", v.sq_factor, Constraint::kLowerFactor);
  }
}

std::vector<DeepGPModel::LayerOut> DeepGPModel::forward(
    Tape& t, const ParamRegistry::Bound& b, const MatrixXd& x,
    const std::vector<std::vector<Index>>& active, int samples, std::uint64_t seed,
    bool sample_last) const {
  const bool g = config_.grad_enhanced;
  const int w = width_;
  const int d = dim_;
  const Index S = samples;
  std::vector<LayerOut> outs(levels_);
  Var ones_row = t.constant(Matrix::Ones(1, S));

  {
    const LayerIds& id = ids_[0];
    LayerOut& o = outs[0];
    o.points = active[0];
    const Index n = static_cast<Index>(o.points.size());
    grams::SEVars k{b[id.var], b[id.ls]};
    Coords zc = grams::columns(b[id.z]);
    Coords xc = grams::constant_columns(t, rows_of(x, o.points));
    const Var& kn = b[id.knoise];
    vi::ConditionalInputs in;
    in.kzz = add_diag(g ? grams::se_grad_gram(k, zc, zc) : grams::se_gram(k, zc, zc), kn);
    in.kzx = g ? grams::se_grad_gram(k, zc, xc) : grams::se_gram(k, zc, xc);
    in.kxx_diag = g ? grams::se_grad_diag(k, kn, n) : grams::se_diag(k, kn, n);
    in.mq = b[id.mq];
    in.factor = b[id.sq];
    in.mz = t.constant(Matrix::Zero(in.mq.rows(), 1));
    in.mx = t.constant(Matrix::Zero(n * w, 1));
    vi::Conditional c = vi::conditional(in);
    o.mean = c.mean;
    o.var = c.var;
    o.kl = c.kl;
    o.paths = 1;
    if (levels_ > 1 || sample_last) {
      Var eps = t.constant(normal_matrix(n * w, S, derive_seed(seed, 1)));
      Var mrep = matmul(c.mean, ones_row);
      Var srep = matmul(sqrt_clamped(c.var), ones_row);
      o.samples = reshape(mrep + cwise_mul(eps, srep), n * w * S, 1);
    }
  }

  for (int l = 2; l <= levels_; ++l) {
    const LayerIds& id = ids_[l - 1];
    const LayerOut& prev = outs[l - 2];
    LayerOut& o = outs[l - 1];
    o.points = active[l - 1];
    const Index n = static_cast<Index>(o.points.size());
    const Index nprev = static_cast<Index>(prev.points.size());
    const Index P = n * S;

    std::vector<Index> pos(n);
    for (Index i = 0; i < n; ++i) {
      auto it = std::lower_bound(prev.points.begin(), prev.points.end(), o.points[i]);
      if (it == prev.points.end() || *it != o.points[i])
        throw InvalidArgument("deep GP: active point sets are not nested");
      pos[i] = it - prev.points.begin();
    }
    IndexList gi(P * w);
    std::vector<Index> xrows(P);
    for (Index j = 0; j < S; ++j)
      for (Index i = 0; i < n; ++i) {
        xrows[j * n + i] = o.points[i];
        for (int c = 0; c < w; ++c) gi[(j * n + i) * w + c] = (j * nprev + pos[i]) * w + c;
      }
    Var fin = gather_rows(prev.samples, gi);
    Var f = w == 1 ? fin : strided(fin, 0, w, P);
    Coords gr;
    for (int a = 0; a < d && g; ++a) gr.push_back(strided(fin, 1 + a, w, P));
    Coords xc = grams::constant_columns(t, rows_of(x, xrows));

    grams::LayerVars lv{{b[id.gx_var], b[id.gx_ls]},
                        {b[id.gf_var], b[id.gf_ls]},
                        {b[id.gm_var], b[id.gm_ls]},
                        b[id.knoise],
                        b[id.kappa],
                        b[id.offset]};
    Coords zc = grams::columns(b[id.z]);
    const Var& zp = b[id.zprev];
    const Index m = zp.rows();
    Var zf = col(zp, 0);
    Coords zg;
    for (int a = 0; a < d && g; ++a) zg.push_back(col(zp, 1 + a));

    vi::ConditionalInputs in;
    if (g) {
      in.kzz = add_diag(grams::layer_grad_gram(lv, zc, zf, zg, zc, zf, zg), lv.kernel_noise);
      in.kzx = grams::layer_grad_gram(lv, zc, zf, zg, xc, f, gr);
      in.kxx_diag = grams::layer_grad_diag(lv, gr);
    } else {
      in.kzz = add_diag(grams::layer_gram(lv, zc, zf, zc, zf), lv.kernel_noise);
      in.kzx = grams::layer_gram(lv, zc, zf, xc, f);
      in.kxx_diag = grams::layer_diag(lv, P);
    }
    Var zflat = g ? reshape(transpose(zp), m * w, 1) : zf;
    in.mz = scale(zflat, lv.mean_scale) + matmul(t.constant(value_mask(m, w)), lv.mean_offset);
    in.mx = scale(fin, lv.mean_scale) + matmul(t.constant(value_mask(P, w)), lv.mean_offset);
    in.mq = b[id.mq];
    in.factor = b[id.sq];
    vi::Conditional c = vi::conditional(in);
    o.mean = reshape(c.mean, n * w, S);
    o.var = reshape(c.var, n * w, S);
    o.kl = c.kl;
    o.paths = static_cast<int>(S);
    if (l < levels_ || sample_last) {
      Var eps = t.constant(normal_matrix(P * w, 1, derive_seed(seed, static_cast<std::uint64_t>(l))));
      o.samples = c.mean + cwise_mul(eps, sqrt_clamped(c.var));
    }
  }
  return outs;
}

DeepGPModel::ObjectiveParts DeepGPModel::objective_parts(Tape& t, const ParamRegistry::Bound& b,
                                                         std::uint64_t seed, int samples,
                                                         DGPObjective kind) const {
  auto outs = forward(t, b, x0_, train_active_, samples, seed, false);
  const int w = width_;
  const int d = dim_;
  Var rec, kl;
  for (int l = 1; l <= levels_; ++l) {
    const LayerOut& o = outs[l - 1];
    const LayerIds& id = ids_[l - 1];
    const FidelityDataset& ds = data_[l - 1];
    const bool gl = use_grad_lik_ && ds.has_gradients();
    const int wl = gl ? w : 1;
    const Index nl = ds.size();
    const Index R = nl * wl;
    const Index S = o.paths;

    IndexList rows(R);
    Matrix y(R, 1);
    for (Index i = 0; i < nl; ++i) {
      const Index r0 = fid_index_[l - 1][i];
      auto it = std::lower_bound(o.points.begin(), o.points.end(), r0);
      const Index q = it - o.points.begin();
      for (int c = 0; c < wl; ++c) {
        rows[c * nl + i] = q * w + c;
        y(c * nl + i, 0) = c == 0 ? ds.Y[i] : ds.G(i, c - 1);
      }
    }
    Var mu = gather_rows(o.mean, rows);
    Var var = gather_rows(o.var, rows);
    Var ymat = t.constant(Matrix(y.replicate(1, S)));
    Var nrow = grams::broadcast(b[id.noise], nl);
    if (gl) nrow = vcat({nrow, grams::broadcast(b[id.gnoise], nl * d)});
    Var nmat = matmul(nrow, t.constant(Matrix::Ones(1, S)));

    Var term;
    if (kind == DGPObjective::kElbo) {
      Var e = -0.5 * log((2.0 * std::numbers::pi) * nmat) -
              0.5 * cwise_div(square(ymat - mu) + var, nmat);
      term = (1.0 / static_cast<double>(S)) * sum(e);
    } else {
      Var tv = var + nmat;
      Var lp = -0.5 * log((2.0 * std::numbers::pi) * tv) - 0.5 * cwise_div(square(ymat - mu), tv);
      Matrix pick = Matrix::Zero(nl, R);
      for (Index i = 0; i < nl; ++i)
        for (int c = 0; c < wl; ++c) pick(i, c * nl + i) = 1.0;
      term = sum(row_logmeanexp(matmul(t.constant(pick), lp)));
    }
    rec = l == 1 ? term : rec + term;
    kl = l == 1 ? o.kl : kl + o.kl;
  }
  ObjectiveParts parts;
  parts.reconstruction = rec;
  parts.kl = kl;
  parts.total = rec - config_.beta * kl;
  return parts;
}

Var DeepGPModel::evaluate(Tape& t, const ParamRegistry::Bound& b, std::uint64_t seed) {
  return objective_parts(t, b, seed, config_.samples_train, config_.objective).total;
}

double DeepGPModel::objective_value(std::uint64_t seed, int samples, DGPObjective kind) const {
  Tape t;
  auto b = params_.bind(t);
  return objective_parts(t, b, seed, samples, kind).total.scalar();
}

DeepPosterior DeepGPModel::compute_deep_posterior(const MatrixXd& x, int samples,
                                                  std::uint64_t seed) const {
  if (x.cols() != dim_) throw InvalidArgument("deep posterior: input dimension mismatch");
  DeepPosterior out;
  const Index n = x.rows();
  const int w = width_;
  if (n == 0) {
    for (int l = 0; l < levels_; ++l) {
      MixturePosterior m;
      m.width = w;
      m.means.resize(0, samples);
      m.variances.resize(0, samples);
      out.layers.push_back(m);
      out.samples.emplace_back(0, samples);
    }
    return out;
  }
  std::vector<Index> all(n);
  for (Index i = 0; i < n; ++i) all[i] = i;
  std::vector<std::vector<Index>> active(levels_, all);
  Tape t;
  auto b = params_.bind(t);
  auto outs = forward(t, b, x, active, samples, seed, true);
  for (int l = 0; l < levels_; ++l) {
    MixturePosterior m;
    m.width = w;
    if (outs[l].paths == 1) {
      m.means = outs[l].mean.value().replicate(1, samples);
      m.variances = outs[l].var.value().replicate(1, samples);
    } else {
      m.means = outs[l].mean.value();
      m.variances = outs[l].var.value();
    }
    out.layers.push_back(std::move(m));
    out.samples.push_back(Eigen::Map<const MatrixXd>(outs[l].samples.value().data(), n * w, samples));
  }
  return out;
}

MixturePosterior DeepGPModel::predict(const MatrixXd& x, int samples, std::uint64_t seed) const {
  if (x.cols() != dim_) throw InvalidArgument("predict: input dimension mismatch");
  if (samples < 1) throw InvalidArgument("predict: need at least one sample");
  MixturePosterior out;
  out.width = width_;
  const Index n = x.rows();
  out.means.resize(n * width_, samples);
  out.variances.resize(n * width_, samples);
  if (n == 0) return out;

  Index m_max = 1;
  for (int l = 1; l <= levels_; ++l) m_max = std::max(m_max, params_.value(ids_[l - 1].mq).rows());
  const double budget = 4e6;
  const Index chunk = std::max<Index>(
      1, static_cast<Index>(budget / (static_cast<double>(samples) * width_ * m_max)));
  for (Index start = 0, ci = 0; start < n; start += chunk, ++ci) {
    const Index len = std::min(chunk, n - start);
    std::vector<Index> all(len);
    for (Index i = 0; i < len; ++i) all[i] = i;
    std::vector<std::vector<Index>> active(levels_, all);
    Tape t;
    auto b = params_.bind(t);
    auto outs = forward(t, b, x.middleRows(start, len), active, samples,
                        derive_seed(seed, static_cast<std::uint64_t>(ci)), false);
    const LayerOut& top = outs.back();
    if (top.paths == 1) {
      out.means.middleRows(start * width_, len * width_) = top.mean.value().replicate(1, samples);
      out.variances.middleRows(start * width_, len * width_) = top.var.value().replicate(1, samples);
    } else {
      out.means.middleRows(start * width_, len * width_) = top.mean.value();
      out.variances.middleRows(start * width_, len * width_) = top.var.value();
    }
  }
  return out;
}

KernelParams DeepGPModel::layer1_kernel() const {
  const LayerIds& id = ids_[0];
  return KernelParams(params_.value(id.var)(0, 0), VectorXd(params_.value(id.ls)),
                      params_.value(id.knoise)(0, 0));
}

LayerKernelParams DeepGPModel::layer_kernel(int level) const {
  if (level < 2 || level > levels_) throw InvalidArgument("layer_kernel: level out of range");
  const LayerIds& id = ids_[level - 1];
  LayerKernelParams k;
  k.gx = KernelParams(params_.value(id.gx_var)(0, 0), VectorXd(params_.value(id.gx_ls)));
  k.gf = KernelParams(params_.value(id.gf_var)(0, 0), VectorXd(params_.value(id.gf_ls)));
  k.gamma = KernelParams(params_.value(id.gm_var)(0, 0), VectorXd(params_.value(id.gm_ls)));
  k.kernel_noise = params_.value(id.knoise)(0, 0);
  k.mean_scale = params_.value(id.kappa)(0, 0);
  k.mean_offset = params_.value(id.offset)(0, 0);
  return k;
}

void DeepGPModel::set_layer1_kernel(const KernelParams& k) {
  k.validate();
  const LayerIds& id = ids_[0];
  params_.set_value(id.var, MatrixXd::Constant(1, 1, k.variance));
  params_.set_value(id.ls, MatrixXd(k.lengthscales));
  params_.set_value(id.knoise, MatrixXd::Constant(1, 1, k.kernel_noise));
}

void DeepGPModel::set_layer_kernel(int level, const LayerKernelParams& k) {
  if (level < 2 || level > levels_) throw InvalidArgument("set_layer_kernel: level out of range");
  const LayerIds& id = ids_[level - 1];
  params_.set_value(id.gx_var, MatrixXd::Constant(1, 1, k.gx.variance));
  params_.set_value(id.gx_ls, MatrixXd(k.gx.lengthscales));
  params_.set_value(id.gf_var, MatrixXd::Constant(1, 1, k.gf.variance));
  params_.set_value(id.gf_ls, MatrixXd(k.gf.lengthscales));
  params_.set_value(id.gm_var, MatrixXd::Constant(1, 1, k.gamma.variance));
  params_.set_value(id.gm_ls, MatrixXd(k.gamma.lengthscales));
  params_.set_value(id.knoise, MatrixXd::Constant(1, 1, k.kernel_noise));
  params_.set_value(id.kappa, MatrixXd::Constant(1, 1, k.mean_scale));
  params_.set_value(id.offset, MatrixXd::Constant(1, 1, k.mean_offset));
}

VariationalLayer DeepGPModel::variational(int level) const {
  const LayerIds& id = ids_.at(level - 1);
  VariationalLayer v;
  v.inducing_base = params_.value(id.z);
  v.inducing_prev = level > 1 ? params_.value(id.zprev) : MatrixXd(v.inducing_base.rows(), 0);
  v.mq = params_.value(id.mq);
  v.sq_factor = params_.value(id.sq);
  v.trainable_inducing = params_.entry(id.z).trainable;
  return v;
}

void DeepGPModel::set_variational(int level, const VariationalLayer& v) {
  const LayerIds& id = ids_.at(level - 1);
  params_.set_value(id.z, v.inducing_base);
  if (level > 1) params_.set_value(id.zprev, v.inducing_prev);
  params_.set_value(id.mq, MatrixXd(v.mq));
  params_.set_value(id.sq, v.sq_factor);
}

double DeepGPModel::likelihood_noise(int level) const {
  return params_.value(ids_.at(level - 1).noise)(0, 0);
}

double DeepGPModel::grad_likelihood_noise(int level) const {
  const int id = ids_.at(level - 1).gnoise;
  return id < 0 ? 0.0 : params_.value(id)(0, 0);
}

nlohmann::json DeepGPModel::to_json() const { return params_.to_json(); }

}  // namespace mfgp

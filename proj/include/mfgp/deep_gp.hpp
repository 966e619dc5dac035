#pragma once

#include "mfgp/data.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/optim.hpp"
#include "mfgp/variational.hpp"

#include <json.hpp>

#include <random>

namespace mfgp {

enum class DGPObjective { kElbo, kPll };
enum class InducingRegime { kFullRank, kDense };

struct DeepGPConfig {
  bool grad_enhanced = false;
  DGPObjective objective = DGPObjective::kElbo;
  double beta = 1.0;
  int samples_train = 30;
  int samples_predict = 300;
  InducingRegime inducing = InducingRegime::kFullRank;
  int dense_m = 40;
  // Drop gradient coordinates from the likelihood (the model still carries them).
  bool mask_gradients = false;

  double init_lengthscale = 1.0;
  double init_gf_lengthscale = 1.0;
  double init_gamma_variance = 0.1;
  double init_noise = 1e-2;
  double init_grad_noise = 1e-2;
  double init_kernel_noise = 1e-3;
  double init_sq = 1e-2;
  double noise_floor = 1e-6;
  double kernel_noise_floor = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

// Equal-weight mixture over Monte Carlo paths. Column j holds component j;
// rows are point-major with `width` outputs per point.
struct MixturePosterior {
  int width = 1;
  MatrixXd means;
  MatrixXd variances;

  Eigen::Index points() const { return width > 0 ? means.rows() / width : 0; }
  Eigen::Index components() const { return means.cols(); }
  VectorXd mean() const;
  // Law of total variance over components.
  VectorXd variance() const;
};

struct DeepPosterior {
  std::vector<MixturePosterior> layers;
  std::vector<MatrixXd> samples;  // per layer, (points * width) x components
};

// f = mu + eps * sqrt(diag) independently per point and coordinate.
VectorXd sample_layer(const GaussianBatch& batch, std::mt19937_64& rng);
VectorXd grad_sample_layer(const GaussianBatch& batch, std::mt19937_64& rng);

class DeepGPModel : public Objective {
 public:
  // `data` is expected to be normalized; levels 1..L, each non-empty.
  DeepGPModel(Datasets data, DeepGPConfig config);

  ParamRegistry& params() override { return params_; }
  const ParamRegistry& params() const { return params_; }
  ad::Var evaluate(ad::Tape& tape, const ParamRegistry::Bound& bound,
                   std::uint64_t seed) override;

  // Objective with a chosen sample count, kept separate from the reconstruction
  // parts so callers can inspect both.
  struct ObjectiveParts {
    ad::Var total;
    ad::Var reconstruction;
    ad::Var kl;
  };
  ObjectiveParts objective_parts(ad::Tape& tape, const ParamRegistry::Bound& bound,
                                 std::uint64_t seed, int samples, DGPObjective kind) const;
  double objective_value(std::uint64_t seed, int samples, DGPObjective kind) const;

  // Per-layer mixtures at x (all layers evaluated at every point).
  DeepPosterior compute_deep_posterior(const MatrixXd& x, int samples, std::uint64_t seed) const;
  // Layer-L mixture, evaluated in chunks of points.
  MixturePosterior predict(const MatrixXd& x, int samples, std::uint64_t seed) const;

  int levels() const { return levels_; }
  int dim() const { return dim_; }
  int width() const { return width_; }
  const DeepGPConfig& config() const { return config_; }
  const Datasets& data() const { return data_; }
  const MatrixXd& union_inputs() const { return x0_; }
  // Rows of union_inputs() holding each datum of level l (1-based).
  const std::vector<Eigen::Index>& fidelity_index(int level) const {
    return fid_index_[level - 1];
  }

  KernelParams layer1_kernel() const;
  LayerKernelParams layer_kernel(int level) const;
  void set_layer1_kernel(const KernelParams& k);
  void set_layer_kernel(int level, const LayerKernelParams& k);
  VariationalLayer variational(int level) const;
  void set_variational(int level, const VariationalLayer& v);
  double likelihood_noise(int level) const;
  double grad_likelihood_noise(int level) const;

  nlohmann::json to_json() const;
  void load_params(const nlohmann::json& j) { params_.from_json(j); }

 private:
  struct LayerIds {
    int var = -1, ls = -1;  // layer 1
    int gx_var = -1, gx_ls = -1, gf_var = -1, gf_ls = -1, gm_var = -1, gm_ls = -1;
    int kappa = -1, offset = -1;
    int knoise = -1, noise = -1, gnoise = -1;
    int z = -1, zprev = -1, mq = -1, sq = -1;
  };

  struct LayerOut {
    ad::Var mean;     // (n * w) x S
    ad::Var var;      // (n * w) x S
    ad::Var samples;  // (S * n * w) x 1, index ((j * n + i) * w + c)
    ad::Var kl;
    std::vector<Eigen::Index> points;  // rows of the input batch
    int paths = 1;
  };

  std::vector<LayerOut> forward(ad::Tape& tape, const ParamRegistry::Bound& bound,
                                const MatrixXd& x,
                                const std::vector<std::vector<Eigen::Index>>& active,
                                int samples, std::uint64_t seed, bool sample_last) const;

  void build_union();
  void init_params();

  DeepGPConfig config_;
  Datasets data_;
  ParamRegistry params_;
  int levels_ = 0, dim_ = 0, width_ = 1;
  bool use_grad_lik_ = false;
  MatrixXd x0_;
  std::vector<std::vector<Eigen::Index>> fid_index_;
  std::vector<std::vector<Eigen::Index>> train_active_;
  std::vector<LayerIds> ids_;
};

const char* to_string(DGPObjective o);
DGPObjective parse_dgp_objective(const std::string& s);

}  // namespace mfgp

#pragma once

#include "mfgp/data.hpp"
#include "mfgp/gp_exact.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/optim.hpp"

namespace mfgp {

// Inputs paired with 1-based fidelity tags.
struct TaggedInputs {
  MatrixXd X;
  std::vector<int> level;

  Eigen::Index size() const { return X.rows(); }
};

TaggedInputs stack_inputs(const Datasets& data);

// Block gram of the LMC kernel. Gradient rows/columns are included per side.
MatrixXd compute_k_lmc(const TaggedInputs& a, const TaggedInputs& b,
                       const std::vector<KernelParams>& kernels, const IndexMixing& mix,
                       bool grad_a, bool grad_b);

struct LMCConfig {
  int terms = 0;  // 0 selects the number of fidelities
  bool grad_enhanced = false;
  bool per_fidelity_noise = false;
  double init_lengthscale = 1.0;
  double init_noise = 1e-3;
  double init_grad_noise = 1e-3;
  double noise_floor = 1e-6;
  double mixing_jitter = 0.01;
  std::uint64_t seed = 0;
};

// Multi-output GP over fidelity-tagged data. The objective is the exact log
// marginal likelihood of the stacked data. Kernel variances are held at 1;
// the mixing factors carry the output scales.
class LMCModel : public Objective {
 public:
  LMCModel(Datasets data, LMCConfig config);

  ParamRegistry& params() override { return params_; }
  const ParamRegistry& params() const { return params_; }
  ad::Var evaluate(ad::Tape& tape, const ParamRegistry::Bound& bound,
                   std::uint64_t seed) override;

  int levels() const { return levels_; }
  int terms() const { return terms_; }
  int dim() const { return dim_; }
  const LMCConfig& config() const { return config_; }
  const Datasets& data() const { return data_; }

  std::vector<KernelParams> kernels() const;
  IndexMixing mixing() const;
  void set_mixing(const IndexMixing& mix);
  // Per-row noise of the stacked training gram.
  VectorXd noise_diagonal() const;

  double log_marginal_likelihood() const;
  // Latent marginal mean and variance at fidelity target (default: highest).
  PosteriorGaussian predict(const MatrixXd& xstar, int target_fidelity = 0) const;

 private:
  LMCConfig config_;
  Datasets data_;
  ParamRegistry params_;
  TaggedInputs inputs_;
  VectorXd targets_;
  int levels_ = 0;
  int terms_ = 0;
  int dim_ = 0;
  std::vector<int> id_ls_, id_var_, id_b_;
  int id_noise_ = -1, id_gnoise_ = -1;
};

LossTrace train_lmc(LMCModel& model, const Schedule& schedule);

}  // namespace mfgp

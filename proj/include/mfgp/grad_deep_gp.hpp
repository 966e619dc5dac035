#pragma once

#include "mfgp/deep_gp.hpp"

namespace mfgp {

// Inducing set of layer `level` built from the data:
//   level 1: inputs X0 (full rank) or the first m inputs of level 1 (dense);
//   level l >= 2: inputs of level l-1 paired with [Y, grad Y] there.
// mq starts at the level-l data where it was sampled at the same input and
// at an exact-GP interpolant of the level-l data elsewhere. S_q = init_sq * I.
VariationalLayer build_inducing(const Datasets& data, int level, bool with_grad,
                                InducingRegime regime, int dense_m, double init_sq);

// Gradient form of the above: inducing_prev holds [Y, grad Y] for level >= 2.
inline VariationalLayer build_inducing_gradients(const Datasets& data, int level,
                                                 InducingRegime regime = InducingRegime::kFullRank,
                                                 int dense_m = 40, double init_sq = 1e-2) {
  return build_inducing(data, level, true, regime, dense_m, init_sq);
}

// Exact-GP interpolant of one fidelity (unit variance, unit lengthscales).
// Returns n x 1 values or n x (d+1) [value, gradient] rows.
MatrixXd fidelity_interpolant(const FidelityDataset& ds, const MatrixXd& at, bool with_grad);

// Deduplicated union of every level's inputs, in order of first appearance.
MatrixXd union_inputs(const Datasets& data);

// Per-point (d+1) conditional of a gradient layer l >= 2.
GaussianBatch grad_layer_conditional(const VariationalLayer& state, const MatrixXd& f_prev,
                                     const MatrixXd& x, const LayerKernelParams& kernel);

// Objectives on a fixed seed (common random numbers).
double dgp_elbo(const DeepGPModel& model, std::uint64_t seed, int samples);
double dgp_pll(const DeepGPModel& model, std::uint64_t seed, int samples);
double grad_dgp_elbo(const DeepGPModel& model, std::uint64_t seed, int samples);
double grad_dgp_pll(const DeepGPModel& model, std::uint64_t seed, int samples);

}  // namespace mfgp

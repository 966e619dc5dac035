#pragma once

// Differentiable gram assembly on an autodiff tape. Point sets are passed as
// lists of coordinate columns (one n x 1 node per input dimension) so inputs
// can themselves depend on parameters (trainable inducing inputs, samples
// from a previous layer).

#include "mfgp/autodiff.hpp"

#include <vector>

namespace mfgp::grams {

using ad::Tape;
using ad::Var;

using Coords = std::vector<Var>;

struct SEVars {
  Var variance;      // 1 x 1
  Var lengthscales;  // d x 1
};

struct LayerVars {
  SEVars gx;
  SEVars gf;  // one lengthscale
  SEVars gamma;
  Var kernel_noise;
  Var mean_scale;
  Var mean_offset;
};

Coords columns(const Var& x);
Coords constant_columns(Tape& t, const Eigen::MatrixXd& x);
Coords gather(const Coords& c, const ad::IndexList& rows);

// Scalar element a of a column vector.
Var element(const Var& v, Eigen::Index a);

Var se_gram(const SEVars& p, const Coords& xl, const Coords& xr);

// Point-major (d+1)-interleaved gram of values and first derivatives.
Var se_grad_gram(const SEVars& p, const Coords& xl, const Coords& xr);

// k_gx(x, x') k_gf(f, f') + k_gamma(x, x'); kernel noise is left to the caller.
Var layer_gram(const LayerVars& p, const Coords& xl, const Var& fl, const Coords& xr,
               const Var& fr);

// Gradient form; gl/gr hold grad f (one n x 1 column per dimension).
Var layer_grad_gram(const LayerVars& p, const Coords& xl, const Var& fl, const Coords& gl,
                    const Coords& xr, const Var& fr, const Coords& gr);

// Diagonal of the prior covariance at n coincident points, kernel noise included.
// Value forms return n x 1, gradient forms n(d+1) x 1 point-major.
Var se_diag(const SEVars& p, const Var& kernel_noise, Eigen::Index n);
Var se_grad_diag(const SEVars& p, const Var& kernel_noise, Eigen::Index n);
Var layer_diag(const LayerVars& p, Eigen::Index n);
Var layer_grad_diag(const LayerVars& p, const Coords& g);

// Broadcast a 1 x 1 node to an n x 1 column.
Var broadcast(const Var& s, Eigen::Index n);

}  // namespace mfgp::grams

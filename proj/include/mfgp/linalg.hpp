#pragma once

#include <Eigen/Dense>

namespace mfgp::linalg {

// Lower Cholesky factor of a symmetric matrix, with the jitter that was needed
// to obtain it. The plain factorization is tried first; on failure a diagonal
// jitter of 1e-6 * mean(diag) is added and escalated x10 up to 1e-2.
struct Cholesky {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};

Cholesky robust_cholesky(const Eigen::MatrixXd& k);

inline constexpr double kJitterStart = 1e-6;
inline constexpr double kJitterMax = 1e-2;

// Solves L x = b and L^T x = b for lower-triangular L.
Eigen::MatrixXd solve_lower(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& b);
Eigen::MatrixXd solve_lower_transposed(const Eigen::MatrixXd& lower,
                                       const Eigen::MatrixXd& b);

double log_det_from_cholesky(const Eigen::MatrixXd& lower);

}  // namespace mfgp::linalg

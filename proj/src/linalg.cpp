#include "mfgp/linalg.hpp"

#include "mfgp/error.hpp"

#include <cmath>
#include <sstream>

namespace mfgp {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kNumericalFailure: return "numerical failure";
    case ErrorCode::kDomainError: return "domain error";
    case ErrorCode::kParseError: return "parse error";
    case ErrorCode::kSchemaError: return "schema error";
    case ErrorCode::kIoError: return "i/o error";
    case ErrorCode::kStateError: return "state error";
  }
  return "unknown error";
}

namespace linalg {

Cholesky robust_cholesky(const Eigen::MatrixXd& k) {
  if (k.rows() != k.cols()) throw InvalidArgument("cholesky: matrix is not square");
  if (!k.allFinite()) throw NumericalFailure("cholesky: matrix has non-finite entries");
  Cholesky out;
  if (k.size() == 0) return out;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() == Eigen::Success) {
    out.lower = llt.matrixL();
    return out;
  }
  const double scale = std::max(std::abs(k.diagonal().mean()), 1e-12);
  for (double j = kJitterStart; j <= kJitterMax * (1.0 + 1e-9); j *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += j * scale;
    llt.compute(kj);
    if (llt.info() == Eigen::Success) {
      out.lower = llt.matrixL();
      out.jitter = j * scale;
      return out;
    }
  }
  std::ostringstream msg;
  msg << "cholesky failed on a " << k.rows() << "x" << k.cols()
      << " matrix even with jitter " << kJitterMax << " * mean(diag)";
  throw NumericalFailure(msg.str());
}

Eigen::MatrixXd solve_lower(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& b) {
  return lower.triangularView<Eigen::Lower>().solve(b);
}

Eigen::MatrixXd solve_lower_transposed(const Eigen::MatrixXd& lower,
                                       const Eigen::MatrixXd& b) {
  return lower.triangularView<Eigen::Lower>().transpose().solve(b);
}

double log_det_from_cholesky(const Eigen::MatrixXd& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

}  // namespace linalg
}  // namespace mfgp

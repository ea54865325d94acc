#include "npcgp/exact_gp.hpp"

namespace npcgp {

GaussianMoments exact_conditional(const MatrixXd& Kxx, const MatrixXd& Kxz, const MatrixXd& Kzz,
                                  const VectorXd& v, double jitter) {
  const int m = static_cast<int>(Kzz.rows());
  Eigen::LLT<MatrixXd> llt(Kzz + jitter * MatrixXd::Identity(m, m));
  if (llt.info() != Eigen::Success) throw NumericError("exact_conditional: singular Kzz");
  GaussianMoments out;
  out.mean = Kxz * llt.solve(v);
  out.cov = Kxx - Kxz * llt.solve(Kxz.transpose());
  return out;
}

double gp_log_evidence(const MatrixXd& K, const VectorXd& y, double noise_var) {
  const int n = static_cast<int>(y.size());
  Eigen::LLT<MatrixXd> llt(K + noise_var * MatrixXd::Identity(n, n));
  if (llt.info() != Eigen::Success) throw NumericError("gp_log_evidence: singular covariance");
  VectorXd alpha = llt.solve(y);
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * n * std::log(2.0 * M_PI);
}

}  // namespace npcgp

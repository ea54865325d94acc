#pragma once

#include <Eigen/Dense>

#include "npcgp/common.hpp"

namespace npcgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GaussianMoments {
  VectorXd mean;
  MatrixXd cov;
};

// p(f(X) | g(Z) = v) for jointly Gaussian (f(X), g(Z)) with blocks
// Kxx = Cov[f(X)], Kxz = Cov[f(X), g(Z)], Kzz = Cov[g(Z)].
GaussianMoments exact_conditional(const MatrixXd& Kxx, const MatrixXd& Kxz, const MatrixXd& Kzz,
                                  const VectorXd& v, double jitter = 1e-10);

// log N(y; 0, K + noise_var I)
double gp_log_evidence(const MatrixXd& K, const VectorXd& y, double noise_var);

}  // namespace npcgp

#pragma once

#include <Eigen/Dense>
#include <random>
#include <span>
#include <vector>

#include "npcgp/common.hpp"
#include "npcgp/tape.hpp"

namespace npcgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---- scalar kernel evaluations, templated so they run on doubles or on
// tape nodes (hyperparameters differentiable, inputs plain doubles) ----

template <class T>
T eq_ard_eval_t(const T& variance, std::span<const T> lengthscales,
                std::span<const double> x, std::span<const double> y) {
  T acc(0.0);
  for (size_t p = 0; p < lengthscales.size(); ++p) {
    T d = (x[p] - y[p]) / lengthscales[p];
    acc += square(d);
  }
  return variance * exp(Var(-0.5) * acc);
}

inline double eq_ard_eval_t(double variance, std::span<const double> lengthscales,
                            std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (size_t p = 0; p < lengthscales.size(); ++p) {
    double d = (x[p] - y[p]) / lengthscales[p];
    acc += d * d;
  }
  return variance * std::exp(-0.5 * acc);
}

// DSE: EQ in (x - x') with a Gaussian window of decay alpha on each argument,
// which makes samples square integrable.
template <class T>
T dse_eval_t(const T& variance, const T& lengthscale, const T& decay, double x, double y) {
  T d = (x - y) / lengthscale;
  return variance * exp(-(decay * (x * x + y * y) + Var(0.5) * square(d)));
}

inline double dse_eval_t(double variance, double lengthscale, double decay, double x, double y) {
  double d = (x - y) / lengthscale;
  return variance * std::exp(-(decay * (x * x + y * y) + 0.5 * d * d));
}

// ---- double-valued kernel objects ----

struct EqArdKernel {
  double variance = 1.0;
  std::vector<double> lengthscales;

  EqArdKernel() = default;
  EqArdKernel(double var, std::vector<double> ls) : variance(var), lengthscales(std::move(ls)) {
    validate();
  }
  void validate() const {
    if (variance <= 0) throw ParameterError("EqArdKernel: variance must be positive");
    for (double l : lengthscales)
      if (l <= 0) throw ParameterError("EqArdKernel: lengthscales must be positive");
  }
  size_t dims() const { return lengthscales.size(); }
  double eval(std::span<const double> x, std::span<const double> y) const {
    if (x.size() != dims() || y.size() != dims())
      throw StructuralError("EqArdKernel: input dimension mismatch");
    return eq_ard_eval_t(variance, std::span<const double>(lengthscales), x, y);
  }
};

struct DseKernel {
  double variance = 1.0;
  double lengthscale = 1.0;
  double decay = 1.0;

  DseKernel() = default;
  DseKernel(double var, double ls, double dec) : variance(var), lengthscale(ls), decay(dec) {
    validate();
  }
  void validate() const {
    if (variance <= 0 || lengthscale <= 0 || decay <= 0)
      throw ParameterError("DseKernel: parameters must be positive");
  }
  double eval(double x, double y) const { return dse_eval_t(variance, lengthscale, decay, x, y); }
  double eval(std::span<const double> x, std::span<const double> y) const {
    return eval(x[0], y[0]);
  }
};

// Product of an EQ factor and a standard periodic factor per dimension; used
// only as ground truth in the toy data generator. The same lengthscale is
// used for both factors.
struct PeriodicEqKernel {
  double variance = 1.0;
  std::vector<double> lengthscales;
  std::vector<double> periods;

  PeriodicEqKernel() = default;
  PeriodicEqKernel(double var, std::vector<double> ls, std::vector<double> per)
      : variance(var), lengthscales(std::move(ls)), periods(std::move(per)) {
    if (variance <= 0) throw ParameterError("PeriodicEqKernel: variance must be positive");
    if (lengthscales.size() != periods.size())
      throw StructuralError("PeriodicEqKernel: lengthscales/periods size mismatch");
  }
  size_t dims() const { return lengthscales.size(); }
  double eval(std::span<const double> x, std::span<const double> y) const {
    double acc = 1.0;
    for (size_t p = 0; p < dims(); ++p) {
      double d = x[p] - y[p];
      double l2 = lengthscales[p] * lengthscales[p];
      double s = std::sin(M_PI * d / periods[p]);
      acc *= std::exp(-0.5 * d * d / l2) * std::exp(-2.0 * s * s / l2);
    }
    return variance * acc;
  }
};

// ---- random Fourier features ----

// Frequencies drawn from the spectral density of the kernel, phases uniform
// on [0, 2pi), weights standard normal. Basis functions are
// phi_i(x) = sqrt(2 var / B) cos(theta_i . x + beta_i).
struct RffDraws {
  MatrixXd theta;  // B x P
  VectorXd beta;   // B
  VectorXd w;      // B
  double variance = 1.0;
};

RffDraws sample_frequencies(const EqArdKernel& k, int basis_count, std::mt19937_64& rng);

// EQ factor of the DSE kernel; the decaying window is applied to the sampled
// paths, not to the basis frequencies.
RffDraws sample_frequencies(const DseKernel& k, int basis_count, std::mt19937_64& rng);

// ---- covariance matrix assembly ----

struct CovFactor {
  MatrixXd K;  // with jitter on the diagonal
  MatrixXd L;  // lower Cholesky factor
  double jitter_used = 0.0;
};

// K_ij = k(x_i, x_j) + jitter 1[i=j]; jitter escalates by factors of 10 up to
// 1e-4 before giving up.
template <class Kernel>
CovFactor cov_matrix(const Kernel& k, const MatrixXd& X, double jitter) {
  if (jitter < 0) throw ParameterError("cov_matrix: jitter must be nonnegative");
  const int m = static_cast<int>(X.rows());
  MatrixXd K(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j <= i; ++j) {
      std::vector<double> xi(X.row(i).begin(), X.row(i).end());
      std::vector<double> xj(X.row(j).begin(), X.row(j).end());
      K(i, j) = K(j, i) = k.eval(xi, xj);
    }
  }
  double jit = jitter;
  for (;;) {
    MatrixXd Kj = K + jit * MatrixXd::Identity(m, m);
    Eigen::LLT<MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) {
      CovFactor out;
      out.K = std::move(Kj);
      out.L = llt.matrixL();
      out.jitter_used = jit;
      return out;
    }
    jit = (jit == 0.0) ? 1e-10 : jit * 10.0;
    if (jit > 1e-4)
      throw NumericError("cov_matrix: Cholesky failed after jitter escalation to 1e-4");
  }
}

}  // namespace npcgp

#pragma once

#include <Eigen/Dense>
#include <random>
#include <span>
#include <vector>

#include "npcgp/kernels.hpp"

namespace npcgp {

// Gaussian smoothing window g(z, x) = amplitude * exp(-sum_p prec_p (x_p - z_p)^2)
// defining the interdomain transform of the input process.
template <class T>
struct GaussianWindowT {
  T amplitude;
  std::vector<T> precisions;
};
using GaussianWindow = GaussianWindowT<double>;

// Window mass int g dz = amplitude * prod_p sqrt(pi / prec_p).
inline double window_mass(const GaussianWindow& w) {
  double m = w.amplitude;
  for (double a : w.precisions) m *= std::sqrt(M_PI / a);
  return m;
}

// Inducing inputs with a Gaussian variational distribution N(mu, L L^T) over
// the inducing outputs.
struct InducingSet {
  MatrixXd Z;   // M x P
  VectorXd mu;  // M
  MatrixXd L;   // M x M lower triangular, positive diagonal
  int count() const { return static_cast<int>(Z.rows()); }
  int dims() const { return static_cast<int>(Z.cols()); }
};

// ---- templated covariance formulas (double or tape scalars) ----
//
// Smoothing an EQ kernel by Gaussian windows stays in the EQ family. With
// rho_p = 1 / (2 l_p^2):
//   once:  prec -> rho a / (rho + a),          scale sqrt(pi / (rho + a))
//   twice: prec -> rho a a' / S, S = rho a + a a' + rho a',  scale pi / sqrt(S)
// per dimension; both validated against quadrature.

template <class T>
T cross_cov_t(const T& variance, std::span<const T> lengthscales, const GaussianWindowT<T>& win,
              std::span<const double> x, std::span<const double> z) {
  T out = variance * win.amplitude;
  for (size_t p = 0; p < lengthscales.size(); ++p) {
    T rho = 0.5 / square(lengthscales[p]);
    T s = rho + win.precisions[p];
    T prec = rho * win.precisions[p] / s;
    double d = x[p] - z[p];
    out *= sqrt(M_PI / s) * exp(-prec * (d * d));
  }
  return out;
}

template <class T>
T interdomain_cov_t(const T& variance, std::span<const T> lengthscales,
                    const GaussianWindowT<T>& win_a, const GaussianWindowT<T>& win_b,
                    std::span<const double> z, std::span<const double> z2) {
  T out = variance * win_a.amplitude * win_b.amplitude;
  for (size_t p = 0; p < lengthscales.size(); ++p) {
    T rho = 0.5 / square(lengthscales[p]);
    T a = win_a.precisions[p], b = win_b.precisions[p];
    T s = rho * a + a * b + rho * b;
    T prec = rho * a * b / s;
    double d = z[p] - z2[p];
    out *= M_PI / sqrt(s) * exp(-prec * (d * d));
  }
  return out;
}

inline double cross_cov(const EqArdKernel& k, const GaussianWindow& win,
                        std::span<const double> x, std::span<const double> z) {
  return cross_cov_t(k.variance, std::span<const double>(k.lengthscales), win, x, z);
}

inline double interdomain_cov(const EqArdKernel& k, const GaussianWindow& win_a,
                              const GaussianWindow& win_b, std::span<const double> z,
                              std::span<const double> z2) {
  return interdomain_cov_t(k.variance, std::span<const double>(k.lengthscales), win_a, win_b, z,
                           z2);
}

// ---- random feature path evaluations ----

// f_i = sum_j w_j sqrt(2 var / B) cos(theta_j . x_i + beta_j)
VectorXd prior_sample_eval(const RffDraws& basis, const MatrixXd& X);

// DSE prior sample: the RFF sample of the EQ factor, multiplied by the
// decaying window exp(-decay x^2).
VectorXd windowed_prior_sample_eval(const RffDraws& basis, double decay, const VectorXd& x);

// Gaussian-smoothed basis functions
//   tphi_i(z) = int g(t, z) phi_i(t) dt
//             = amp sqrt(2 var / B) prod_p [sqrt(pi/a_p) e^{-theta_ip^2/(4 a_p)}]
//               cos(theta_i . z + beta_i)
// evaluated at every inducing input: an M x B matrix.
MatrixXd transformed_basis(const RffDraws& basis, const GaussianWindow& win, const MatrixXd& Z);

// Draw v = mu + L eps with eps standard normal.
VectorXd sample_inducing_values(const InducingSet& ind, std::mt19937_64& rng);

// Same-domain Matheron update: prior(X) + k(X, Z) K^{-1} (v - Phi w).
VectorXd matheron_update(const RffDraws& basis, const InducingSet& ind, const EqArdKernel& kernel,
                         const VectorXd& v_sample, const MatrixXd& X, double jitter = 1e-10);

// Same, for a 1-D DSE-kernel process (the basis is windowed by the decay).
VectorXd matheron_update(const RffDraws& basis, const InducingSet& ind, const DseKernel& kernel,
                         const VectorXd& v_sample, const VectorXd& x, double jitter = 1e-10);

// Interdomain Matheron update (inducing variables live in the smoothed
// domain): prior(X) + k_cross(X, Z) Kt^{-1} (v - tPhi w).
VectorXd interdomain_matheron_sample(const RffDraws& basis, const GaussianWindow& win,
                                     const InducingSet& ind, const EqArdKernel& kernel,
                                     const VectorXd& v_sample, const MatrixXd& X,
                                     double jitter = 1e-10);

// Smoothed-path evaluation int g(t, x) u_path(t) dt for the same update;
// reproduces the drawn inducing values at the inducing inputs.
VectorXd interdomain_smoothed_sample(const RffDraws& basis, const GaussianWindow& win,
                                     const InducingSet& ind, const EqArdKernel& kernel,
                                     const VectorXd& v_sample, const MatrixXd& X,
                                     double jitter = 1e-10);

}  // namespace npcgp

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

#include "npcgp/integrals.hpp"
#include "npcgp/kernels.hpp"
#include "npcgp/pathwise.hpp"

namespace npcgp {

// A sampled layer in closed form. The u paths carry the interdomain Matheron
// update of each latent process; the g paths carry the same-domain update of
// each 1-D smoothing-kernel process. Canonical coefficients are exactly
// K^{-1}(v - Phi w) of the corresponding update.

struct UPathRaw {
  MatrixXd theta;      // B x P RFF frequencies
  VectorXd beta, w;    // B
  double variance = 1.0;
  MatrixXd Zu;         // M x P inducing inputs (canonical centers)
  VectorXd q_can;      // M
  VectorXd rho_tilde;  // P: precision of the smoothed-EQ canonical basis
  double c_can = 1.0;  // amplitude of the canonical basis
  int basis_count() const { return static_cast<int>(w.size()); }
};

struct GPathRaw {
  VectorXd theta, beta, w;  // B (frequencies of the EQ factor)
  double variance = 1.0;
  double rho = 1.0;    // EQ precision 1/(2 l^2)
  double alpha = 1.0;  // window decay
  VectorXd z;          // M_G inducing inputs
  VectorXd q_can;      // M_G
  int basis_count() const { return static_cast<int>(w.size()); }
};

struct PathCoefficients {
  int P = 0, D = 0, Q = 0;
  bool fast = false;
  std::vector<UPathRaw> u;  // Q
  std::vector<GPathRaw> g;  // full: D*P indexed d*P + p; fast: P
  MatrixXd mixing;          // full: 1 x Q; fast: D x Q
  const GPathRaw& g_at(int d, int p) const { return fast ? g[p] : g[d * P + p]; }
};

// Direct path evaluations, used by the numerical-convolution oracle and the
// covariance estimator tests.
VectorXd eval_u_path(const UPathRaw& u, const MatrixXd& X);
VectorXd eval_g_path(const GPathRaw& g, const VectorXd& s);

// Closed-form layer output f(X), N x D. The production path: the u-RFF term
// is contracted through the transfer function of each g path, the u-canonical
// term through per-dimension Gaussian-cosine tables.
MatrixXd layer_output_sample(const PathCoefficients& paths, const MatrixXd& X);

// Per-point assembly straight from the I-integrals, keeping both complex
// branches of every cosine and checking that the imaginary parts cancel.
// Slow; serves as an independent route for tests and the selfcheck.
MatrixXd layer_output_sample_reference(const PathCoefficients& paths, const MatrixXd& X,
                                       double residue_tol = 1e-8);

// ---- lowered coefficients ----
//
// Convolving the g path against the u-canonical Gaussian e^{-rho~ (t - z)^2}
// gives, per dimension, with s1 = alpha + rho~ and a2 = s1 + rho_g:
//   W(delta) = e^{-gamma delta^2} sum_i c_i cos(nu_i delta + beta_i)
//            + e^{-e1 delta^2} sum_j q_j b_j e^{e2 z_j delta}
// where delta = x - z_l. Derived via i2a / i2b; the oracle tests pin it.

template <class T>
struct Term2Lowered {
  T gamma, e1, e2;
  std::vector<T> c, nu;  // B
  std::vector<T> b;      // M_G
};

template <class T>
Term2Lowered<T> lower_term2(const T& alpha, const T& rho_g, const T& var_g,
                            std::span<const T> theta_g, const VectorXd& beta_g,
                            const VectorXd& w_g, const VectorXd& z_g, const T& rho_tilde) {
  (void)beta_g;
  const int B = static_cast<int>(theta_g.size());
  const int M = static_cast<int>(z_g.size());
  Term2Lowered<T> out;
  T s1 = alpha + rho_tilde;
  out.gamma = alpha * rho_tilde / s1;
  T a2 = s1 + rho_g;
  out.e1 = rho_tilde * (alpha + rho_g) / a2;
  out.e2 = 2.0 * rho_g * rho_tilde / a2;
  T kc = sqrt(M_PI / s1) * sqrt(2.0 * var_g / double(B));
  out.c.reserve(B);
  out.nu.reserve(B);
  for (int i = 0; i < B; ++i) {
    out.c.push_back(w_g[i] * kc * exp(-square(theta_g[i]) / (4.0 * s1)));
    out.nu.push_back(theta_g[i] * rho_tilde / s1);
  }
  T kb = var_g * sqrt(M_PI / a2);
  out.b.reserve(M);
  for (int j = 0; j < M; ++j) {
    double z2 = z_g[j] * z_g[j];
    out.b.push_back(kb * exp(-(alpha * z2) - (alpha * rho_g + rho_g * rho_tilde) * z2 / a2));
  }
  return out;
}

// Transfer function hatG(omega) = int G(s) e^{-i omega s} ds of a sampled g
// path; the u-RFF term of the convolution is
//   Re[ e^{i(theta_k . x + beta_k)} prod_p hatG_p(theta_kp) ].
template <class T>
std::pair<T, T> g_transfer(const T& omega, const T& alpha, const T& rho_g, const T& var_g,
                           std::span<const T> theta_g, const VectorXd& beta_g, const VectorXd& w_g,
                           std::span<const T> q_g, const VectorXd& z_g) {
  const int B = static_cast<int>(theta_g.size());
  const int M = static_cast<int>(z_g.size());
  T cg = sqrt(2.0 * var_g / double(B));
  T sa = sqrt(M_PI / alpha);
  T re(0.0), im(0.0);
  for (int i = 0; i < B; ++i) {
    T ep = exp(-square(theta_g[i] - omega) / (4.0 * alpha));
    T em = exp(-square(theta_g[i] + omega) / (4.0 * alpha));
    T h = 0.5 * sa * cg * w_g[i];
    re += h * std::cos(beta_g[i]) * (ep + em);
    im += h * std::sin(beta_g[i]) * (ep - em);
  }
  T s = alpha + rho_g;
  T ks = sqrt(M_PI / s);
  for (int j = 0; j < M; ++j) {
    double z2 = z_g[j] * z_g[j];
    T mag = q_g[j] * var_g * ks *
            exp(-(alpha * z2) - (square(omega) + 4.0 * alpha * rho_g * z2) / (4.0 * s));
    T ph = -omega * rho_g * z_g[j] / s;
    re += mag * cos(ph);
    im += mag * sin(ph);
  }
  return {re, im};
}

// ---- differentiable layer evaluation ----
//
// The heavy per-point work stays in vectorized double arrays; every output
// f_{n,d} becomes one tape node whose local partials against the lowered
// coefficient nodes, canonical coefficients, frequencies, mixing weights and
// (optionally) the inputs are computed analytically in the same sweep.

struct ConvUVarBlock {
  std::vector<Var> q_can;  // M_u
  std::vector<Var> theta;  // B*P row-major (k, p)
  VectorXd beta, w;
  double c_u = 1.0;  // sqrt(2 var_u / B)
  Var c_can;
  MatrixXd Zu;
};

struct ConvTerm1VarBlock {
  std::vector<Var> re_d, im_d;  // B_u transfer products
};

struct ConvTerm2VarBlock {
  Term2Lowered<Var> low;
  VectorXd beta_g, z_g;
  std::vector<Var> q_g;
};

struct ConvLayerVarInputs {
  int N = 0, P = 0, D = 0, Q = 0;
  bool fast = false;
  const MatrixXd* X = nullptr;              // N x P values
  const std::vector<Var>* X_var = nullptr;  // optional N*P row-major nodes (deep layers)
  std::vector<ConvUVarBlock> u;             // Q
  std::vector<ConvTerm1VarBlock> t1;        // fast: Q; full: Q*D indexed q*D + d
  std::vector<ConvTerm2VarBlock> t2;        // indexed (q*D + d)*P + p; fast d = 0
  std::vector<Var> mixing;                  // full: Q; fast: D*Q row-major (d, q)
  const ConvTerm1VarBlock& t1_at(int q, int d) const { return fast ? t1[q] : t1[q * D + d]; }
  const ConvTerm2VarBlock& t2_at(int q, int d, int p) const {
    return fast ? t2[q * P + p] : t2[(q * D + d) * P + p];
  }
};

// Returns N*D nodes, row-major (n, d).
std::vector<Var> conv_layer_forward_var(Tape& tape, const ConvLayerVarInputs& in);

// ---- Monte Carlo output covariance ----

struct CovarianceCurve {
  MatrixXd lags;  // L x P
  MatrixXd mean;  // L x D: averaged over anchors
  MatrixXd se;    // L x D: one standard error of the mean over draws
};

// Cov[f_d(x0), f_d(x0 + lag)] estimated over draws of full paths (inducing
// values from the variational posterior, RFF bases redrawn), averaged over
// the anchor points.
CovarianceCurve estimate_output_covariance(const std::function<PathCoefficients(int)>& draw_path,
                                           int D, const MatrixXd& lags,
                                           const MatrixXd& anchors, int S);

}  // namespace npcgp

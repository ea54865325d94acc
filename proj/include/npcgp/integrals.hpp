#pragma once

#include <cmath>
#include <complex>

#include "npcgp/common.hpp"

namespace npcgp {

// Closed forms for the one-dimensional Gaussian integrals that appear when a
// sampled smoothing-kernel path is convolved with a sampled input-process
// path. All four are derived from two identities:
//
//   int exp(-a (t - c)^2) exp(i w t) dt = sqrt(pi/a) exp(i w c - w^2 / (4a))
//   exp(-a (t-x)^2) exp(-r (t-z)^2)
//       = exp(-a r (x-z)^2 / (a+r)) exp(-(a+r) (t - m)^2),
//     m = (a x + r z) / (a + r)
//
// and validated against adaptive quadrature (see tests and selfcheck); the
// quadrature suite is the authority for their correctness.

// i1a: int exp(-alpha (x - t)^2) cos(theta1 t + beta) exp(i theta2 t) dt
inline std::complex<double> i1a(double x, double alpha, double theta1, double beta,
                                double theta2) {
  if (alpha <= 0) throw ParameterError("i1a: alpha must be positive");
  const double s = std::sqrt(M_PI / alpha);
  const double wp = theta1 + theta2;  // e^{+i beta} branch of the cosine
  const double wm = theta2 - theta1;  // e^{-i beta} branch
  std::complex<double> plus = std::polar(0.5 * s * std::exp(-wp * wp / (4.0 * alpha)), wp * x + beta);
  std::complex<double> minus = std::polar(0.5 * s * std::exp(-wm * wm / (4.0 * alpha)), wm * x - beta);
  return plus + minus;
}

// i1b: int exp(-alpha (x - t)^2) exp(-rho (t - z)^2) exp(i theta t) dt
inline std::complex<double> i1b(double x, double alpha, double z, double rho, double theta) {
  if (alpha <= 0 || rho <= 0) throw ParameterError("i1b: alpha and rho must be positive");
  const double s = alpha + rho;
  const double d = x - z;
  double mag = std::sqrt(M_PI / s) * std::exp(-(theta * theta + 4.0 * alpha * rho * d * d) / (4.0 * s));
  double phase = theta * (alpha * x + rho * z) / s;
  return std::polar(mag, phase);
}

// i2a: int exp(-alpha (x - t)^2) cos(theta t + beta) exp(-rho (t - z)^2) dt
inline double i2a(double x, double alpha, double theta, double beta, double rho, double z) {
  if (alpha <= 0 || rho <= 0) throw ParameterError("i2a: alpha and rho must be positive");
  const double s = alpha + rho;
  const double d = x - z;
  const double m = (alpha * x + rho * z) / s;
  return std::sqrt(M_PI / s) *
         std::exp(-(alpha * rho * d * d) / s - theta * theta / (4.0 * s)) *
         std::cos(theta * m + beta);
}

// i2b: int exp(-alpha (x - t)^2) exp(-rho1 (t - z1)^2) exp(-rho2 (t - z2)^2) dt
inline double i2b(double x, double alpha, double rho1, double z1, double rho2, double z2) {
  if (alpha <= 0 || rho1 <= 0 || rho2 <= 0)
    throw ParameterError("i2b: alpha, rho1 and rho2 must be positive");
  const double a = alpha + rho1 + rho2;
  const double q = alpha * rho1 * (x - z1) * (x - z1) + alpha * rho2 * (x - z2) * (x - z2) +
                   rho1 * rho2 * (z1 - z2) * (z1 - z2);
  return std::sqrt(M_PI / a) * std::exp(-q / a);
}

}  // namespace npcgp

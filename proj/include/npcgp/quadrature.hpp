#pragma once

#include <cmath>
#include <complex>
#include <functional>

#include "npcgp/common.hpp"

namespace npcgp {

// Adaptive Gauss-Kronrod quadrature (15-point Kronrod, embedded 7-point
// Gauss), bisecting until the embedded error estimate meets tolerance.
// Serves as the independent oracle for every closed-form integral in the
// library; tolerances here are tighter than any assertion made against it.

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  long evals = 0;
};

namespace gk15 {
// nodes on [0, 1] of |x|; weights from the classic QUADPACK tables
inline constexpr double xgk[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
inline constexpr double wgk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline constexpr double wg[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};
}  // namespace gk15

inline QuadResult gk15_panel(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double fc = f(c);
  double kron = gk15::wgk[7] * fc;
  double gauss = gk15::wg[3] * fc;
  for (int i = 0; i < 7; ++i) {
    double fl = f(c - h * gk15::xgk[i]);
    double fr = f(c + h * gk15::xgk[i]);
    kron += gk15::wgk[i] * (fl + fr);
    if (i % 2 == 1) gauss += gk15::wg[i / 2] * (fl + fr);
  }
  QuadResult r;
  r.value = kron * h;
  r.error = std::abs((kron - gauss) * h);
  r.evals = 15;
  return r;
}

inline void adaptive_gk(const std::function<double(double)>& f, double a, double b,
                        double abs_tol, double rel_tol, int depth, QuadResult& acc) {
  QuadResult panel = gk15_panel(f, a, b);
  acc.evals += panel.evals;
  bool converged = panel.error <= abs_tol || panel.error <= rel_tol * std::abs(panel.value);
  if (converged || depth >= 48) {
    if (!std::isfinite(panel.value)) throw NumericError("quadrature: non-finite integrand");
    acc.value += panel.value;
    acc.error += panel.error;
    return;
  }
  double m = 0.5 * (a + b);
  adaptive_gk(f, a, m, 0.5 * abs_tol, rel_tol, depth + 1, acc);
  adaptive_gk(f, m, b, 0.5 * abs_tol, rel_tol, depth + 1, acc);
}

inline QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                            double rel_tol = 1e-12, double abs_tol = 1e-13) {
  QuadResult acc;
  adaptive_gk(f, a, b, abs_tol, rel_tol, 0, acc);
  return acc;
}

inline std::complex<double> integrate_complex(const std::function<std::complex<double>(double)>& f,
                                              double a, double b, double rel_tol = 1e-12) {
  QuadResult re = integrate([&](double t) { return f(t).real(); }, a, b, rel_tol);
  QuadResult im = integrate([&](double t) { return f(t).imag(); }, a, b, rel_tol);
  return {re.value, im.value};
}

}  // namespace npcgp

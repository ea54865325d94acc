#include "npcgp/conv_layer.hpp"

#include <complex>

namespace npcgp {

namespace {

using Eigen::ArrayXd;
using Eigen::ArrayXXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Term2D {
  double gamma, e1, e2;
  ArrayXd c, nu, b;
};

Term2D to_values(const Term2Lowered<double>& t) {
  Term2D out;
  out.gamma = t.gamma;
  out.e1 = t.e1;
  out.e2 = t.e2;
  out.c = Eigen::Map<const ArrayXd>(t.c.data(), t.c.size());
  out.nu = Eigen::Map<const ArrayXd>(t.nu.data(), t.nu.size());
  out.b = Eigen::Map<const ArrayXd>(t.b.data(), t.b.size());
  return out;
}

Term2D to_values(const Term2Lowered<Var>& t) {
  Term2D out;
  out.gamma = t.gamma.value();
  out.e1 = t.e1.value();
  out.e2 = t.e2.value();
  auto vals = [](const std::vector<Var>& v) {
    ArrayXd a(v.size());
    for (size_t i = 0; i < v.size(); ++i) a[i] = v[i].value();
    return a;
  };
  out.c = vals(t.c);
  out.nu = vals(t.nu);
  out.b = vals(t.b);
  return out;
}

bool equispaced(const VectorXd& z) {
  if (z.size() < 3) return true;
  double h = z[1] - z[0];
  for (int j = 2; j < z.size(); ++j)
    if (std::abs((z[j] - z[j - 1]) - h) > 1e-12 * (1.0 + std::abs(h))) return false;
  return true;
}

// Per-dimension term2 tables for one (q, d, p) block on a batch:
//   W = E .* C + T2B,  delta_{nl} = x_n - zu_l.
struct Term2Tables {
  ArrayXXd delta, e, cosn, sinn, cz, sz, w;  // cz/sz are M x B
  ArrayXXd t2b;                              // E1 .* sum_j q_j b_j EXj
  ArrayXXd e1arr;                            // exp(-e1 delta^2)
};

Term2Tables term2_tables(const Term2D& t, const VectorXd& beta_g, const VectorXd& z_g,
                         const ArrayXd& q_g, const ArrayXd& x, const ArrayXd& zu) {
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(zu.size());
  const int bg = static_cast<int>(t.c.size());
  const int mg = static_cast<int>(z_g.size());
  Term2Tables out;
  out.delta = x.replicate(1, m).rowwise() - zu.transpose();
  ArrayXXd d2 = out.delta.square();
  out.e = (-t.gamma * d2).exp();

  // C via the angle addition cos(a - b) = cos a cos b + sin a sin b with
  // a = nu_i x + beta_i, b = nu_i zu_l, so only (n + m) x B trig calls.
  ArrayXXd angn = (x.matrix() * t.nu.matrix().transpose()).array();
  angn.rowwise() += beta_g.transpose().array();
  out.cosn = angn.cos();
  out.sinn = angn.sin();
  ArrayXXd angz = (zu.matrix() * t.nu.matrix().transpose()).array();
  out.cz = angz.cos();
  out.sz = angz.sin();
  MatrixXd czc = out.cz.matrix() * t.c.matrix().asDiagonal();
  MatrixXd szc = out.sz.matrix() * t.c.matrix().asDiagonal();
  ArrayXXd c = (out.cosn.matrix() * czc.transpose() + out.sinn.matrix() * szc.transpose()).array();

  out.e1arr = (-t.e1 * d2).exp();
  ArrayXXd s = ArrayXXd::Zero(n, m);
  if (equispaced(z_g) && mg > 1) {
    // EXj along an equispaced grid is a geometric sequence per entry
    ArrayXXd cur = (t.e2 * z_g[0] * out.delta).exp();
    ArrayXXd step = (t.e2 * (z_g[1] - z_g[0]) * out.delta).exp();
    for (int j = 0; j < mg; ++j) {
      s += (q_g[j] * t.b[j]) * cur;
      if (j + 1 < mg) cur *= step;
    }
  } else {
    for (int j = 0; j < mg; ++j) s += (q_g[j] * t.b[j]) * (t.e2 * z_g[j] * out.delta).exp();
  }
  out.t2b = out.e1arr * s;
  out.w = out.e * c + out.t2b;
  (void)bg;
  return out;
}

Term2D lower_term2_values(const GPathRaw& g, double rho_tilde) {
  std::vector<double> th(g.theta.data(), g.theta.data() + g.theta.size());
  return to_values(lower_term2<double>(g.alpha, g.rho, g.variance, th, g.beta, g.w, g.z, rho_tilde));
}

// transfer products D_k = prod_p hatG_p(theta_kp) for one (q, d)
void transfer_products(const PathCoefficients& paths, int q, int d, ArrayXd& re_out,
                       ArrayXd& im_out) {
  const UPathRaw& u = paths.u[q];
  const int bu = u.basis_count();
  re_out.resize(bu);
  im_out.resize(bu);
  for (int k = 0; k < bu; ++k) {
    std::complex<double> prod(1.0, 0.0);
    for (int p = 0; p < paths.P; ++p) {
      const GPathRaw& g = paths.g_at(d, p);
      std::vector<double> th(g.theta.data(), g.theta.data() + g.theta.size());
      std::vector<double> qg(g.q_can.data(), g.q_can.data() + g.q_can.size());
      auto [re, im] = g_transfer<double>(u.theta(k, p), g.alpha, g.rho, g.variance, th, g.beta,
                                         g.w, qg, g.z);
      prod *= std::complex<double>(re, im);
    }
    re_out[k] = prod.real();
    im_out[k] = prod.imag();
  }
}

}  // namespace

VectorXd eval_u_path(const UPathRaw& u, const MatrixXd& X) {
  RffDraws b;
  b.theta = u.theta;
  b.beta = u.beta;
  b.w = u.w;
  b.variance = u.variance;
  VectorXd f = prior_sample_eval(b, X);
  for (int n = 0; n < X.rows(); ++n) {
    double acc = 0.0;
    for (int l = 0; l < u.Zu.rows(); ++l) {
      double e = 0.0;
      for (int p = 0; p < X.cols(); ++p) {
        double d = X(n, p) - u.Zu(l, p);
        e += u.rho_tilde[p] * d * d;
      }
      acc += u.q_can[l] * std::exp(-e);
    }
    f[n] += u.c_can * acc;
  }
  return f;
}

VectorXd eval_g_path(const GPathRaw& g, const VectorXd& s) {
  const int n = static_cast<int>(s.size());
  const double cg = std::sqrt(2.0 * g.variance / g.basis_count());
  VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    double rff = 0.0;
    for (int k = 0; k < g.basis_count(); ++k)
      rff += g.w[k] * cg * std::cos(g.theta[k] * s[i] + g.beta[k]);
    double can = 0.0;
    for (int j = 0; j < g.z.size(); ++j) {
      double d = s[i] - g.z[j];
      can += g.q_can[j] * g.variance * std::exp(-g.alpha * g.z[j] * g.z[j]) *
             std::exp(-g.rho * d * d);
    }
    out[i] = std::exp(-g.alpha * s[i] * s[i]) * rff + can;
  }
  return out;
}

MatrixXd layer_output_sample(const PathCoefficients& paths, const MatrixXd& X) {
  const int N = static_cast<int>(X.rows());
  const int P = paths.P, D = paths.D, Q = paths.Q;
  if (X.cols() != P) throw StructuralError("layer_output_sample: input dimension mismatch");
  MatrixXd F = MatrixXd::Zero(N, D);
  for (int q = 0; q < Q; ++q) {
    const UPathRaw& u = paths.u[q];
    const int bu = u.basis_count();
    const int m = static_cast<int>(u.Zu.rows());
    const double cu = std::sqrt(2.0 * u.variance / bu);
    MatrixXd ang = X * u.theta.transpose();
    ang.rowwise() += u.beta.transpose();
    ArrayXXd cosa = ang.array().cos(), sina = ang.array().sin();

    const int dblocks = paths.fast ? 1 : D;
    for (int db = 0; db < dblocks; ++db) {
      ArrayXd re_d, im_d;
      transfer_products(paths, q, db, re_d, im_d);
      ArrayXd wre = u.w.array() * cu * re_d, wim = u.w.array() * cu * im_d;
      VectorXd term1 = cosa.matrix() * wre.matrix() - sina.matrix() * wim.matrix();

      ArrayXXd pi = ArrayXXd::Ones(N, m);
      for (int p = 0; p < P; ++p) {
        const GPathRaw& g = paths.g_at(db, p);
        Term2D low = lower_term2_values(g, u.rho_tilde[p]);
        Term2Tables tab = term2_tables(low, g.beta, g.z, g.q_can.array(), X.col(p).array(),
                                       u.Zu.col(p).array());
        pi *= tab.w;
      }
      VectorXd term2 = u.c_can * (pi.matrix() * u.q_can);
      VectorXd total = term1 + term2;
      if (paths.fast) {
        for (int d = 0; d < D; ++d) F.col(d) += paths.mixing(d, q) * total;
      } else {
        F.col(db) += paths.mixing(0, q) * total;
      }
    }
  }
  return F;
}

MatrixXd layer_output_sample_reference(const PathCoefficients& paths, const MatrixXd& X,
                                       double residue_tol) {
  const int N = static_cast<int>(X.rows());
  const int P = paths.P, D = paths.D, Q = paths.Q;
  MatrixXd F = MatrixXd::Zero(N, D);
  for (int n = 0; n < N; ++n) {
    for (int d = 0; d < D; ++d) {
      double acc = 0.0;
      for (int q = 0; q < Q; ++q) {
        const UPathRaw& u = paths.u[q];
        const double cu = std::sqrt(2.0 * u.variance / u.basis_count());
        const double a = paths.fast ? paths.mixing(d, q) : paths.mixing(0, q);

        // u-RFF term: both complex branches of every cosine pair, with the
        // imaginary residue checked explicitly.
        std::complex<double> t1(0.0, 0.0);
        for (int k = 0; k < u.basis_count(); ++k) {
          std::complex<double> prod_p(1.0, 0.0), prod_m(1.0, 0.0);
          for (int p = 0; p < P; ++p) {
            const GPathRaw& g = paths.g_at(d, p);
            const double x = X(n, p);
            const double cg = std::sqrt(2.0 * g.variance / g.basis_count());
            auto branch = [&](double omega) {
              std::complex<double> s(0.0, 0.0);
              for (int i = 0; i < g.basis_count(); ++i)
                s += g.w[i] * cg *
                     i1a(x, g.alpha, g.theta[i], -(g.theta[i] * x + g.beta[i]), omega);
              for (int j = 0; j < g.z.size(); ++j)
                s += g.q_can[j] * g.variance * std::exp(-g.alpha * g.z[j] * g.z[j]) *
                     i1b(x, g.alpha, x - g.z[j], g.rho, omega);
              return s;
            };
            prod_p *= branch(u.theta(k, p));
            prod_m *= branch(-u.theta(k, p));
          }
          t1 += u.w[k] * cu *
                (0.5 * std::polar(1.0, u.beta[k]) * prod_p +
                 0.5 * std::polar(1.0, -u.beta[k]) * prod_m);
        }
        if (std::abs(t1.imag()) > residue_tol * std::max(1.0, std::abs(t1.real())))
          throw NumericError("layer_output_sample_reference: imaginary residue " +
                             std::to_string(t1.imag()));

        // u-canonical term through i2a / i2b
        double t2 = 0.0;
        for (int l = 0; l < u.Zu.rows(); ++l) {
          double prod = 1.0;
          for (int p = 0; p < P; ++p) {
            const GPathRaw& g = paths.g_at(d, p);
            const double x = X(n, p), zl = u.Zu(l, p), rt = u.rho_tilde[p];
            const double cg = std::sqrt(2.0 * g.variance / g.basis_count());
            double s = 0.0;
            for (int i = 0; i < g.basis_count(); ++i)
              s += g.w[i] * cg *
                   i2a(x, g.alpha, g.theta[i], -(g.theta[i] * x + g.beta[i]), rt, zl);
            for (int j = 0; j < g.z.size(); ++j)
              s += g.q_can[j] * g.variance * std::exp(-g.alpha * g.z[j] * g.z[j]) *
                   i2b(x, g.alpha, g.rho, x - g.z[j], rt, zl);
            prod *= s;
          }
          t2 += u.q_can[l] * prod;
        }
        acc += a * (t1.real() + u.c_can * t2);
      }
      F(n, d) = acc;
    }
  }
  return F;
}

// ---- differentiable forward ----

std::vector<Var> conv_layer_forward_var(Tape& tape, const ConvLayerVarInputs& in) {
  const int N = in.N, P = in.P, D = in.D, Q = in.Q;
  if (!in.X) throw StructuralError("conv_layer_forward_var: X values required");
  const MatrixXd& X = *in.X;

  // per output column: parent nodes plus an N x E matrix of local partials
  std::vector<std::vector<Var>> parents(D);
  std::vector<std::vector<ArrayXd>> partials(D);  // one N-array per parent
  MatrixXd value = MatrixXd::Zero(N, D);
  // d f_{nd} / d x_{np}, filled only when inputs are differentiable
  std::vector<ArrayXXd> xgrad;
  if (in.X_var) xgrad.assign(D, ArrayXXd::Zero(N, P));

  for (int q = 0; q < Q; ++q) {
    const ConvUVarBlock& u = in.u[q];
    const int bu = static_cast<int>(u.w.size());
    const int m = static_cast<int>(u.Zu.rows());
    ArrayXd q_u(m);
    for (int l = 0; l < m; ++l) q_u[l] = u.q_can[l].value();
    const double c_can = u.c_can.value();

    MatrixXd theta_vals(bu, P);
    for (int k = 0; k < bu; ++k)
      for (int p = 0; p < P; ++p) theta_vals(k, p) = u.theta[k * P + p].value();
    MatrixXd ang = X * theta_vals.transpose();
    ang.rowwise() += u.beta.transpose();
    ArrayXXd cosa = ang.array().cos(), sina = ang.array().sin();

    const int dblocks = in.fast ? 1 : D;
    for (int db = 0; db < dblocks; ++db) {
      // ---- term 1 ----
      const ConvTerm1VarBlock& t1 = in.t1_at(q, db);
      ArrayXd re_d(bu), im_d(bu);
      for (int k = 0; k < bu; ++k) {
        re_d[k] = t1.re_d[k].value();
        im_d[k] = t1.im_d[k].value();
      }
      ArrayXd wcu = u.w.array() * u.c_u;
      VectorXd term1 = cosa.matrix() * (wcu * re_d).matrix() - sina.matrix() * (wcu * im_d).matrix();

      // ---- term 2 tables ----
      std::vector<Term2Tables> tabs(P);
      std::vector<Term2D> lows(P);
      for (int p = 0; p < P; ++p) {
        const ConvTerm2VarBlock& t2 = in.t2_at(q, db, p);
        lows[p] = to_values(t2.low);
        ArrayXd qg(t2.q_g.size());
        for (size_t j = 0; j < t2.q_g.size(); ++j) qg[j] = t2.q_g[j].value();
        tabs[p] = term2_tables(lows[p], t2.beta_g, t2.z_g, qg, X.col(p).array(),
                               u.Zu.col(p).array());
      }
      ArrayXXd pi = ArrayXXd::Ones(N, m);
      for (int p = 0; p < P; ++p) pi *= tabs[p].w;
      VectorXd piq = pi.matrix() * q_u.matrix();
      VectorXd term2 = c_can * piq;

      // complement products prod_{p' != p} W via prefix/suffix sweeps
      std::vector<ArrayXXd> comp(P, ArrayXXd::Ones(N, m));
      {
        ArrayXXd prefix = ArrayXXd::Ones(N, m);
        for (int p = 0; p < P; ++p) {
          comp[p] = prefix;
          prefix *= tabs[p].w;
        }
        ArrayXXd suffix = ArrayXXd::Ones(N, m);
        for (int p = P - 1; p >= 0; --p) {
          comp[p] *= suffix;
          suffix *= tabs[p].w;
        }
      }

      VectorXd total = term1 + term2;

      // targets: every d for the fast variant, the single db for the full one
      for (int d = (in.fast ? 0 : db); d < (in.fast ? D : db + 1); ++d) {
        const Var& mix = in.fast ? in.mixing[d * Q + q] : in.mixing[q];
        const double a = mix.value();
        value.col(d) += a * total;

        auto push = [&](const Var& parent, ArrayXd partial) {
          parents[d].push_back(parent);
          partials[d].push_back(std::move(partial));
        };

        // mixing weight
        push(mix, total.array());
        // canonical u coefficients and amplitude
        for (int l = 0; l < m; ++l) push(u.q_can[l], a * c_can * pi.col(l));
        push(u.c_can, a * piq.array());
        // transfer products
        for (int k = 0; k < bu; ++k) {
          push(t1.re_d[k], a * wcu[k] * cosa.col(k));
          push(t1.im_d[k], -a * wcu[k] * sina.col(k));
        }
        // u frequencies through the phase
        for (int k = 0; k < bu; ++k) {
          ArrayXd common = -a * wcu[k] * (sina.col(k) * re_d[k] + cosa.col(k) * im_d[k]);
          for (int p = 0; p < P; ++p)
            push(u.theta[k * P + p], common * X.col(p).array());
          if (in.X_var)
            for (int p = 0; p < P; ++p)
              xgrad[d].col(p) += common * theta_vals(k, p);
        }

        // per-dimension term2 partials
        for (int p = 0; p < P; ++p) {
          const ConvTerm2VarBlock& t2 = in.t2_at(q, db, p);
          const Term2D& low = lows[p];
          const Term2Tables& tab = tabs[p];
          const double s = a * c_can;
          ArrayXXd v = comp[p].rowwise() * q_u.transpose();  // complement with q_l folded in
          ArrayXXd d2 = tab.delta.square();
          ArrayXXd ec = tab.w - tab.t2b;  // E .* C

          push(t2.low.gamma, -s * (v * d2 * ec).rowwise().sum());
          push(t2.low.e1, -s * (v * d2 * tab.t2b).rowwise().sum());

          ArrayXXd ve = v * tab.e;
          ArrayXXd g1 = (ve.matrix() * tab.cz.matrix()).array();  // N x B
          ArrayXXd g2 = (ve.matrix() * tab.sz.matrix()).array();
          VectorXd zu = u.Zu.col(p);
          MatrixXd czz = zu.asDiagonal() * tab.cz.matrix();
          MatrixXd szz = zu.asDiagonal() * tab.sz.matrix();
          ArrayXXd g3 = (ve.matrix() * czz).array();
          ArrayXXd g4 = (ve.matrix() * szz).array();
          ArrayXd x_p = X.col(p).array();

          const int bg = static_cast<int>(low.c.size());
          for (int i = 0; i < bg; ++i) {
            push(t2.low.c[i], s * (tab.cosn.col(i) * g1.col(i) + tab.sinn.col(i) * g2.col(i)));
            ArrayXd dsin = x_p * (tab.sinn.col(i) * g1.col(i) - tab.cosn.col(i) * g2.col(i)) -
                           (tab.sinn.col(i) * g3.col(i) - tab.cosn.col(i) * g4.col(i));
            push(t2.low.nu[i], -s * low.c[i] * dsin);
          }

          // canonical g sums: one masked reduction per inducing point
          ArrayXXd ve1 = v * tab.e1arr;
          const int mg = static_cast<int>(t2.z_g.size());
          ArrayXXd exj;
          ArrayXXd szacc = ArrayXXd::Zero(N, m);  // sum_j q_j b_j z_j EXj
          ArrayXXd cur, step;
          bool geo = equispaced(t2.z_g) && mg > 1;
          if (geo) {
            cur = (low.e2 * t2.z_g[0] * tab.delta).exp();
            step = (low.e2 * (t2.z_g[1] - t2.z_g[0]) * tab.delta).exp();
          }
          ArrayXd qg(mg);
          for (size_t j = 0; j < t2.q_g.size(); ++j) qg[j] = t2.q_g[j].value();
          for (int j = 0; j < mg; ++j) {
            if (geo) {
              exj = cur;
              if (j + 1 < mg) cur *= step;
            } else {
              exj = (low.e2 * t2.z_g[j] * tab.delta).exp();
            }
            ArrayXd red = (ve1 * exj).rowwise().sum();
            push(t2.low.b[j], s * qg[j] * red);
            push(t2.q_g[j], s * low.b[j] * red);
            szacc += (qg[j] * low.b[j] * t2.z_g[j]) * exj;
          }
          push(t2.low.e2, s * (ve1 * tab.delta * szacc).rowwise().sum());

          if (in.X_var) {
            ArrayXd dc = ArrayXd::Zero(N);
            for (int i = 0; i < bg; ++i)
              dc += -low.c[i] * low.nu[i] *
                    (tab.sinn.col(i) * g1.col(i) - tab.cosn.col(i) * g2.col(i));
            ArrayXd dW = -2.0 * low.gamma * (v * tab.delta * ec).rowwise().sum() + dc -
                         2.0 * low.e1 * (v * tab.delta * tab.t2b).rowwise().sum() +
                         low.e2 * (ve1 * szacc).rowwise().sum();
            xgrad[d].col(p) += s * dW;
          }
        }
      }
    }
  }

  // create one node per output entry
  std::vector<Var> out;
  out.reserve(static_cast<size_t>(N) * D);
  for (int n = 0; n < N; ++n) {
    for (int d = 0; d < D; ++d) {
      const size_t e = parents[d].size();
      std::vector<Var> par;
      std::vector<double> part;
      par.reserve(e + (in.X_var ? P : 0));
      part.reserve(e + (in.X_var ? P : 0));
      for (size_t k = 0; k < e; ++k) {
        par.push_back(parents[d][k]);
        part.push_back(partials[d][k][n]);
      }
      if (in.X_var) {
        for (int p = 0; p < P; ++p) {
          par.push_back((*in.X_var)[n * P + p]);
          part.push_back(xgrad[d](n, p));
        }
      }
      out.push_back(tape.custom(value(n, d), par, part));
    }
  }
  return out;
}

CovarianceCurve estimate_output_covariance(const std::function<PathCoefficients(int)>& draw_path,
                                           int D, const MatrixXd& lags, const MatrixXd& anchors,
                                           int S) {
  if (S < 2) throw ParameterError("estimate_output_covariance: S must be >= 2");
  const int L = static_cast<int>(lags.rows());
  const int A = static_cast<int>(anchors.rows());
  const int P = static_cast<int>(anchors.cols());

  // evaluation points: anchors, then anchor + lag for every (a, lag)
  MatrixXd X(A + A * L, P);
  X.topRows(A) = anchors;
  for (int a = 0; a < A; ++a)
    for (int l = 0; l < L; ++l) X.row(A + a * L + l) = anchors.row(a) + lags.row(l);

  // accumulate per draw the anchor-averaged product and the anchor values
  MatrixXd sum_g = MatrixXd::Zero(L, D), sum_g2 = MatrixXd::Zero(L, D);
  MatrixXd sum_f0 = MatrixXd::Zero(L, D), sum_fl = MatrixXd::Zero(L, D);
  for (int s = 0; s < S; ++s) {
    PathCoefficients paths = draw_path(s);
    MatrixXd F = layer_output_sample(paths, X);
    for (int d = 0; d < D; ++d) {
      for (int l = 0; l < L; ++l) {
        double g = 0.0, f0m = 0.0, flm = 0.0;
        for (int a = 0; a < A; ++a) {
          double f0 = F(a, d), fl = F(A + a * L + l, d);
          g += f0 * fl;
          f0m += f0;
          flm += fl;
        }
        g /= A;
        f0m /= A;
        flm /= A;
        sum_g(l, d) += g;
        sum_g2(l, d) += g * g;
        sum_f0(l, d) += f0m;
        sum_fl(l, d) += flm;
      }
    }
  }

  CovarianceCurve out;
  out.lags = lags;
  out.mean.resize(L, D);
  out.se.resize(L, D);
  for (int d = 0; d < D; ++d)
    for (int l = 0; l < L; ++l) {
      double eg = sum_g(l, d) / S;
      double m0 = sum_f0(l, d) / S, ml = sum_fl(l, d) / S;
      out.mean(l, d) = eg - m0 * ml;
      double var_g = sum_g2(l, d) / S - eg * eg;
      out.se(l, d) = std::sqrt(std::max(var_g, 0.0) / S);
    }
  return out;
}

}  // namespace npcgp

#include "npcgp/pathwise.hpp"

namespace npcgp {

VectorXd prior_sample_eval(const RffDraws& basis, const MatrixXd& X) {
  if (X.cols() != basis.theta.cols())
    throw StructuralError("prior_sample_eval: input dimension mismatch");
  const double scale = std::sqrt(2.0 * basis.variance / basis.w.size());
  // angles: N x B
  MatrixXd ang = X * basis.theta.transpose();
  ang.rowwise() += basis.beta.transpose();
  return scale * (ang.array().cos().matrix() * basis.w);
}

VectorXd windowed_prior_sample_eval(const RffDraws& basis, double decay, const VectorXd& x) {
  MatrixXd X = x;
  VectorXd f = prior_sample_eval(basis, X);
  return (-decay * x.array().square()).exp() * f.array();
}

MatrixXd transformed_basis(const RffDraws& basis, const GaussianWindow& win, const MatrixXd& Z) {
  const int M = static_cast<int>(Z.rows());
  const int B = static_cast<int>(basis.w.size());
  const int P = static_cast<int>(Z.cols());
  if (static_cast<int>(win.precisions.size()) != P || basis.theta.cols() != P)
    throw StructuralError("transformed_basis: dimension mismatch");
  for (double a : win.precisions)
    if (a <= 0) throw ParameterError("transformed_basis: window precisions must be positive");

  VectorXd coef(B);
  const double scale = win.amplitude * std::sqrt(2.0 * basis.variance / B);
  for (int i = 0; i < B; ++i) {
    double c = scale;
    for (int p = 0; p < P; ++p) {
      double a = win.precisions[p], th = basis.theta(i, p);
      c *= std::sqrt(M_PI / a) * std::exp(-th * th / (4.0 * a));
    }
    coef[i] = c;
  }
  MatrixXd ang = Z * basis.theta.transpose();  // M x B
  ang.rowwise() += basis.beta.transpose();
  return ang.array().cos().matrix() * coef.asDiagonal();
}

VectorXd sample_inducing_values(const InducingSet& ind, std::mt19937_64& rng) {
  std::normal_distribution<double> norm;
  VectorXd eps(ind.count());
  for (int i = 0; i < eps.size(); ++i) eps[i] = norm(rng);
  return ind.mu + ind.L.triangularView<Eigen::Lower>() * eps;
}

namespace {

// shared update machinery: out = prior(X) + Kxz K^{-1} (v - phi_z w)
VectorXd update_term(const MatrixXd& Kzz_nojit, const MatrixXd& Kxz, const MatrixXd& phi_z,
                     const VectorXd& w, const VectorXd& v, double jitter) {
  const int m = static_cast<int>(Kzz_nojit.rows());
  VectorXd resid = v - phi_z * w;
  double jit = jitter;
  for (;;) {
    Eigen::LLT<MatrixXd> llt(Kzz_nojit + jit * MatrixXd::Identity(m, m));
    if (llt.info() == Eigen::Success) return Kxz * llt.solve(resid);
    jit = (jit == 0.0) ? 1e-10 : jit * 10.0;
    if (jit > 1e-4) throw NumericError("matheron update: singular inducing covariance");
  }
}

}  // namespace

VectorXd matheron_update(const RffDraws& basis, const InducingSet& ind, const EqArdKernel& kernel,
                         const VectorXd& v_sample, const MatrixXd& X, double jitter) {
  if (v_sample.size() != ind.count()) throw StructuralError("matheron_update: v size mismatch");
  const int m = ind.count(), n = static_cast<int>(X.rows());
  MatrixXd Kzz(m, m), Kxz(n, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j) {
      std::vector<double> zi(ind.Z.row(i).begin(), ind.Z.row(i).end());
      std::vector<double> zj(ind.Z.row(j).begin(), ind.Z.row(j).end());
      Kzz(i, j) = Kzz(j, i) = kernel.eval(zi, zj);
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      std::vector<double> xi(X.row(i).begin(), X.row(i).end());
      std::vector<double> zj(ind.Z.row(j).begin(), ind.Z.row(j).end());
      Kxz(i, j) = kernel.eval(xi, zj);
    }
  MatrixXd phi_z = MatrixXd::Zero(m, static_cast<int>(basis.w.size()));
  {
    MatrixXd ang = ind.Z * basis.theta.transpose();
    ang.rowwise() += basis.beta.transpose();
    phi_z = std::sqrt(2.0 * basis.variance / basis.w.size()) * ang.array().cos().matrix();
  }
  return prior_sample_eval(basis, X) + update_term(Kzz, Kxz, phi_z, basis.w, v_sample, jitter);
}

VectorXd matheron_update(const RffDraws& basis, const InducingSet& ind, const DseKernel& kernel,
                         const VectorXd& v_sample, const VectorXd& x, double jitter) {
  if (v_sample.size() != ind.count()) throw StructuralError("matheron_update: v size mismatch");
  const int m = ind.count(), n = static_cast<int>(x.size());
  VectorXd z = ind.Z.col(0);
  MatrixXd Kzz(m, m), Kxz(n, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j) Kzz(i, j) = Kzz(j, i) = kernel.eval(z[i], z[j]);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) Kxz(i, j) = kernel.eval(x[i], z[j]);
  // windowed basis at the inducing inputs
  MatrixXd ang = z * basis.theta.col(0).transpose();
  ang.rowwise() += basis.beta.transpose();
  MatrixXd phi_z = std::sqrt(2.0 * basis.variance / basis.w.size()) *
                   ((-kernel.decay * z.array().square()).exp().matrix().asDiagonal() *
                    ang.array().cos().matrix());
  return windowed_prior_sample_eval(basis, kernel.decay, x) +
         update_term(Kzz, Kxz, phi_z, basis.w, v_sample, jitter);
}

namespace {

MatrixXd interdomain_kzz(const GaussianWindow& win, const InducingSet& ind,
                         const EqArdKernel& kernel) {
  const int m = ind.count();
  MatrixXd Kzz(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j) {
      std::vector<double> zi(ind.Z.row(i).begin(), ind.Z.row(i).end());
      std::vector<double> zj(ind.Z.row(j).begin(), ind.Z.row(j).end());
      Kzz(i, j) = Kzz(j, i) = interdomain_cov(kernel, win, win, zi, zj);
    }
  return Kzz;
}

}  // namespace

VectorXd interdomain_matheron_sample(const RffDraws& basis, const GaussianWindow& win,
                                     const InducingSet& ind, const EqArdKernel& kernel,
                                     const VectorXd& v_sample, const MatrixXd& X, double jitter) {
  const int m = ind.count(), n = static_cast<int>(X.rows());
  MatrixXd Kzz = interdomain_kzz(win, ind, kernel);
  MatrixXd Kxz(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      std::vector<double> xi(X.row(i).begin(), X.row(i).end());
      std::vector<double> zj(ind.Z.row(j).begin(), ind.Z.row(j).end());
      Kxz(i, j) = cross_cov(kernel, win, xi, zj);
    }
  MatrixXd tphi = transformed_basis(basis, win, ind.Z);
  return prior_sample_eval(basis, X) + update_term(Kzz, Kxz, tphi, basis.w, v_sample, jitter);
}

VectorXd interdomain_smoothed_sample(const RffDraws& basis, const GaussianWindow& win,
                                     const InducingSet& ind, const EqArdKernel& kernel,
                                     const VectorXd& v_sample, const MatrixXd& X, double jitter) {
  const int m = ind.count(), n = static_cast<int>(X.rows());
  MatrixXd Kzz = interdomain_kzz(win, ind, kernel);
  MatrixXd Kxz(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      std::vector<double> xi(X.row(i).begin(), X.row(i).end());
      std::vector<double> zj(ind.Z.row(j).begin(), ind.Z.row(j).end());
      Kxz(i, j) = interdomain_cov(kernel, win, win, xi, zj);
    }
  MatrixXd tphi_z = transformed_basis(basis, win, ind.Z);
  MatrixXd tphi_x = transformed_basis(basis, win, X);
  VectorXd prior_smoothed = tphi_x * basis.w;
  return prior_smoothed + update_term(Kzz, Kxz, tphi_z, basis.w, v_sample, jitter);
}

}  // namespace npcgp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "npcgp/exact_gp.hpp"
#include "npcgp/pathwise.hpp"
#include "npcgp/quadrature.hpp"

using namespace npcgp;

namespace {

MatrixXd eq_gram(const EqArdKernel& k, const MatrixXd& A, const MatrixXd& B) {
  MatrixXd K(A.rows(), B.rows());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < B.rows(); ++j) {
      std::vector<double> a(A.row(i).begin(), A.row(i).end());
      std::vector<double> b(B.row(j).begin(), B.row(j).end());
      K(i, j) = k.eval(a, b);
    }
  return K;
}

GaussianWindow delta_window(int P, double alpha = 1e6) {
  GaussianWindow w;
  w.precisions.assign(P, alpha);
  w.amplitude = std::pow(alpha / M_PI, 0.5 * P);  // unit mass
  return w;
}

}  // namespace

TEST_CASE("prior_sample_eval: degenerate bases") {
  RffDraws b;
  b.theta = MatrixXd::Zero(1, 1);
  b.beta = VectorXd::Zero(1);
  b.w = VectorXd::Ones(1);
  b.variance = 1.7;
  MatrixXd X(3, 1);
  X << -1.0, 0.0, 2.0;
  VectorXd f = prior_sample_eval(b, X);
  for (int i = 0; i < 3; ++i) CHECK(f[i] == doctest::Approx(std::sqrt(2 * 1.7)));

  b.w.setZero();
  VectorXd f0 = prior_sample_eval(b, X);
  CHECK(f0.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prior_sample_eval: sample variance matches kernel variance") {
  EqArdKernel k(1.3, {1.0});
  std::mt19937_64 rng(21);
  RffDraws b = sample_frequencies(k, 10000, rng);
  // far-separated evaluation points are nearly independent draws
  const int n = 3000;
  MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) X(i, 0) = i * 37.0;
  VectorXd f = prior_sample_eval(b, X);
  double mean = f.mean();
  double var = (f.array() - mean).square().sum() / n;
  CHECK(std::abs(var - k.variance) / k.variance < 0.05);
}

TEST_CASE("matheron_update: exact interpolation at the inducing inputs") {
  EqArdKernel k(1.0, {0.7});
  std::mt19937_64 rng(3);
  const int M = 6;
  InducingSet ind;
  ind.Z = VectorXd::LinSpaced(M, -2.0, 2.0);
  ind.mu = VectorXd::Zero(M);
  ind.L = MatrixXd::Identity(M, M);
  VectorXd v(M);
  v << 0.4, -1.0, 0.3, 2.0, -0.2, 0.9;
  RffDraws b = sample_frequencies(k, 128, rng);
  VectorXd f = matheron_update(b, ind, k, v, ind.Z, 1e-12);
  CHECK((f - v).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("matheron_update: zero residual leaves the prior untouched") {
  EqArdKernel k(1.0, {0.9});
  std::mt19937_64 rng(5);
  RffDraws b = sample_frequencies(k, 64, rng);
  const int M = 5;
  InducingSet ind;
  ind.Z = VectorXd::LinSpaced(M, -1.5, 1.5);
  ind.mu = VectorXd::Zero(M);
  ind.L = MatrixXd::Zero(M, M);
  // v equals the prior path at Z, so the update term vanishes
  VectorXd v = prior_sample_eval(b, ind.Z);
  MatrixXd X(4, 1);
  X << -2.0, -0.3, 0.8, 2.4;
  VectorXd f = matheron_update(b, ind, k, v, X, 1e-12);
  VectorXd prior = prior_sample_eval(b, X);
  CHECK((f - prior).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("matheron_update: pathwise moments approach the exact conditional") {
  EqArdKernel k(1.0, {0.8});
  const int M = 8, Nt = 12, B = 2000, S = 4000;
  InducingSet ind;
  ind.Z = VectorXd::LinSpaced(M, -2.5, 2.5);
  ind.mu = VectorXd::Zero(M);
  ind.L = MatrixXd::Zero(M, M);
  std::mt19937_64 vr(99);
  std::normal_distribution<double> norm;
  VectorXd v(M);
  for (int i = 0; i < M; ++i) v[i] = norm(vr);
  MatrixXd X = VectorXd::LinSpaced(Nt, -3.0, 3.0);

  MatrixXd Kxx = eq_gram(k, X, X), Kxz = eq_gram(k, X, ind.Z), Kzz = eq_gram(k, ind.Z, ind.Z);
  GaussianMoments exact = exact_conditional(Kxx, Kxz, Kzz, v, 1e-8);

  VectorXd mean_acc = VectorXd::Zero(Nt);
  MatrixXd sq_acc = MatrixXd::Zero(Nt, Nt);
  for (int s = 0; s < S; ++s) {
    std::mt19937_64 rng(1000 + s);
    RffDraws b = sample_frequencies(k, B, rng);
    VectorXd f = matheron_update(b, ind, k, v, X, 1e-8);
    mean_acc += f;
    sq_acc += f * f.transpose();
  }
  VectorXd mean = mean_acc / S;
  MatrixXd cov = sq_acc / S - mean * mean.transpose();
  CHECK((mean - exact.mean).cwiseAbs().maxCoeff() < 0.08);
  CHECK((cov - exact.cov).cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("transformed_basis: constant integrand and quadrature agreement") {
  RffDraws b;
  b.theta = MatrixXd::Zero(1, 1);
  b.beta = VectorXd::Constant(1, 0.4);
  b.w = VectorXd::Ones(1);
  b.variance = 1.0;
  GaussianWindow w;
  w.amplitude = 0.7;
  w.precisions = {1.3};
  MatrixXd Z(1, 1);
  Z << 0.9;
  MatrixXd tphi = transformed_basis(b, w, Z);
  double scale = std::sqrt(2.0);
  CHECK(tphi(0, 0) ==
        doctest::Approx(0.7 * std::sqrt(M_PI / 1.3) * std::cos(0.4) * scale).epsilon(1e-12));

  // P=1, alpha=1, a=1, theta=2, beta=0.3, x=0.5 versus quadrature
  b.theta(0, 0) = 2.0;
  b.beta[0] = 0.3;
  w.amplitude = 1.0;
  w.precisions = {1.0};
  Z(0, 0) = 0.5;
  MatrixXd t2 = transformed_basis(b, w, Z);
  auto f = [&](double z) {
    return std::exp(-(z - 0.5) * (z - 0.5)) * scale * std::cos(2.0 * z + 0.3);
  };
  QuadResult q = integrate(f, 0.5 - 10.0, 0.5 + 10.0);
  CHECK(std::abs(t2(0, 0) - q.value) / std::abs(q.value) < 1e-8);
}

TEST_CASE("transformed_basis: delta window limit recovers the plain basis") {
  EqArdKernel k(1.0, {1.0});
  std::mt19937_64 rng(8);
  RffDraws b = sample_frequencies(k, 16, rng);
  GaussianWindow w = delta_window(1);
  MatrixXd Z(3, 1);
  Z << -0.5, 0.2, 1.4;
  MatrixXd tphi = transformed_basis(b, w, Z);
  MatrixXd ang = Z * b.theta.transpose();
  ang.rowwise() += b.beta.transpose();
  MatrixXd phi = std::sqrt(2.0 * b.variance / 16) * ang.array().cos().matrix();
  CHECK((tphi - phi).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("cross_cov: quadrature agreement on random tuples") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0), up(0.3, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    EqArdKernel k(1.0 + up(rng), {up(rng)});
    GaussianWindow w;
    w.amplitude = 0.5 + up(rng);
    w.precisions = {up(rng)};
    double x = u(rng), z = u(rng);
    auto f = [&](double t) {
      std::vector<double> xv = {x}, tv = {t};
      return k.eval(xv, tv) * w.amplitude * std::exp(-w.precisions[0] * (t - z) * (t - z));
    };
    double half = 12.0 / std::sqrt(std::min(w.precisions[0], 0.5 / (k.lengthscales[0] * k.lengthscales[0]))) + std::abs(x - z);
    QuadResult q = integrate(f, std::min(x, z) - half, std::max(x, z) + half);
    std::vector<double> xv = {x}, zv = {z};
    CHECK(std::abs(cross_cov(k, w, xv, zv) - q.value) / std::abs(q.value) < 1e-6);
  }
}

TEST_CASE("cross_cov: delta limit and translation invariance") {
  EqArdKernel k(1.4, {0.9, 1.2});
  GaussianWindow w = delta_window(2);
  std::vector<double> x = {0.3, -0.6}, z = {-0.2, 0.5};
  CHECK(std::abs(cross_cov(k, w, x, z) - k.eval(x, z)) < 1e-3);

  GaussianWindow w2;
  w2.amplitude = 0.8;
  w2.precisions = {0.7, 1.1};
  double base = cross_cov(k, w2, x, z);
  for (double c : {-1.3, 0.4, 2.2}) {
    std::vector<double> xs = {x[0] + c, x[1] + c}, zs = {z[0] + c, z[1] + c};
    CHECK(cross_cov(k, w2, xs, zs) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("interdomain_cov: nested quadrature agreement at z = z'") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> up(0.4, 1.6), u(-0.8, 0.8);
  for (int rep = 0; rep < 8; ++rep) {
    EqArdKernel k(1.0, {up(rng)});
    GaussianWindow w;
    w.amplitude = 1.0;
    w.precisions = {up(rng)};
    double z = u(rng);
    double rho = 0.5 / (k.lengthscales[0] * k.lengthscales[0]);
    double half = 12.0 / std::sqrt(std::min(w.precisions[0], rho));
    auto inner = [&](double xp) {
      auto f = [&](double x) {
        std::vector<double> xv = {x}, xpv = {xp};
        return k.eval(xv, xpv) * std::exp(-w.precisions[0] * (x - z) * (x - z));
      };
      return integrate(f, z - half, z + half, 1e-12).value;
    };
    QuadResult q = integrate([&](double xp) { return inner(xp) * std::exp(-w.precisions[0] * (xp - z) * (xp - z)); },
                             z - half, z + half, 1e-10);
    std::vector<double> zv = {z};
    CHECK(std::abs(interdomain_cov(k, w, w, zv, zv) - q.value) / std::abs(q.value) < 1e-6);
  }
}

TEST_CASE("interdomain_cov: delta limit and symmetry") {
  EqArdKernel k(1.1, {0.8});
  GaussianWindow w = delta_window(1);
  std::vector<double> z = {0.4}, z2 = {-0.9};
  CHECK(std::abs(interdomain_cov(k, w, w, z, z2) - k.eval(z, z2)) < 1e-3);

  GaussianWindow wa;
  wa.amplitude = 0.9;
  wa.precisions = {1.4};
  CHECK(interdomain_cov(k, wa, wa, z, z2) == doctest::Approx(interdomain_cov(k, wa, wa, z2, z)));
}

TEST_CASE("interdomain matheron: delta window matches the same-domain update") {
  EqArdKernel k(1.0, {0.8});
  std::mt19937_64 rng(41);
  RffDraws b = sample_frequencies(k, 256, rng);
  const int M = 5;
  InducingSet ind;
  ind.Z = VectorXd::LinSpaced(M, -1.5, 1.5);
  ind.mu = VectorXd::Zero(M);
  ind.L = MatrixXd::Zero(M, M);
  VectorXd v(M);
  v << 0.5, -0.8, 0.1, 1.1, -0.4;
  MatrixXd X(6, 1);
  X << -2.0, -1.0, -0.1, 0.6, 1.2, 2.1;
  GaussianWindow w = delta_window(1);
  VectorXd fi = interdomain_matheron_sample(b, w, ind, k, v, X, 1e-9);
  VectorXd fs = matheron_update(b, ind, k, v, X, 1e-9);
  CHECK((fi - fs).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("interdomain matheron: smoothed path interpolates the inducing values") {
  EqArdKernel k(1.0, {0.5});
  std::mt19937_64 rng(47);
  RffDraws b = sample_frequencies(k, 64, rng);
  const int M = 6;
  InducingSet ind;
  ind.Z = VectorXd::LinSpaced(M, -2.0, 2.0);
  ind.mu = VectorXd::Zero(M);
  ind.L = MatrixXd::Zero(M, M);
  VectorXd v(M);
  v << 0.2, -0.5, 0.8, -1.2, 0.3, 0.6;
  GaussianWindow w;
  w.amplitude = 1.0;
  w.precisions = {2.0};
  VectorXd smoothed = interdomain_smoothed_sample(b, w, ind, k, v, ind.Z, 1e-12);
  CHECK((smoothed - v).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("interdomain matheron: moments approach the exact joint conditional") {
  EqArdKernel k(1.0, {0.6});
  const int M = 6, Nt = 10, B = 2000, S = 4000;
  InducingSet ind;
  ind.Z = VectorXd::LinSpaced(M, -2.0, 2.0);
  ind.mu = VectorXd::Zero(M);
  ind.L = MatrixXd::Zero(M, M);
  GaussianWindow w;
  w.amplitude = 1.0;
  w.precisions = {1.5};
  std::mt19937_64 vr(7);
  std::normal_distribution<double> norm;
  VectorXd v(M);
  for (int i = 0; i < M; ++i) v[i] = norm(vr);
  MatrixXd X = VectorXd::LinSpaced(Nt, -2.5, 2.5);

  MatrixXd Kxx = eq_gram(k, X, X);
  MatrixXd Cxz(Nt, M), Kzz(M, M);
  for (int i = 0; i < Nt; ++i)
    for (int j = 0; j < M; ++j) {
      std::vector<double> xi = {X(i, 0)}, zj = {ind.Z(j, 0)};
      Cxz(i, j) = cross_cov(k, w, xi, zj);
    }
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) {
      std::vector<double> zi = {ind.Z(i, 0)}, zj = {ind.Z(j, 0)};
      Kzz(i, j) = interdomain_cov(k, w, w, zi, zj);
    }
  GaussianMoments exact = exact_conditional(Kxx, Cxz, Kzz, v, 1e-8);

  VectorXd mean_acc = VectorXd::Zero(Nt);
  MatrixXd sq_acc = MatrixXd::Zero(Nt, Nt);
  for (int s = 0; s < S; ++s) {
    std::mt19937_64 rng(2000 + s);
    RffDraws b = sample_frequencies(k, B, rng);
    VectorXd f = interdomain_matheron_sample(b, w, ind, k, v, X, 1e-8);
    mean_acc += f;
    sq_acc += f * f.transpose();
  }
  VectorXd mean = mean_acc / S;
  MatrixXd cov = sq_acc / S - mean * mean.transpose();
  CHECK((mean - exact.mean).cwiseAbs().maxCoeff() < 0.08);
  CHECK((cov - exact.cov).cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("sample_inducing_values: degenerate, moments, determinism") {
  InducingSet ind;
  ind.Z = MatrixXd::Zero(3, 1);
  ind.mu = VectorXd::Zero(3);
  ind.mu << 1.0, -2.0, 0.5;
  ind.L = MatrixXd::Zero(3, 3);
  std::mt19937_64 rng(1);
  VectorXd v = sample_inducing_values(ind, rng);
  CHECK((v - ind.mu).cwiseAbs().maxCoeff() == 0.0);

  MatrixXd L(3, 3);
  L << 1.0, 0, 0, 0.4, 0.8, 0, -0.3, 0.2, 1.2;
  ind.L = L;
  MatrixXd target = L * L.transpose();
  const int S = 100000;
  VectorXd mean_acc = VectorXd::Zero(3);
  MatrixXd sq_acc = MatrixXd::Zero(3, 3);
  std::mt19937_64 rng2(77);
  for (int s = 0; s < S; ++s) {
    VectorXd d = sample_inducing_values(ind, rng2);
    mean_acc += d;
    sq_acc += d * d.transpose();
  }
  VectorXd mean = mean_acc / S;
  MatrixXd cov = sq_acc / S - mean * mean.transpose();
  CHECK((mean - ind.mu).cwiseAbs().maxCoeff() < 0.05 * ind.mu.cwiseAbs().maxCoeff());
  CHECK((cov - target).cwiseAbs().maxCoeff() < 0.05 * target.cwiseAbs().maxCoeff());

  std::mt19937_64 ra(5), rb(5);
  CHECK((sample_inducing_values(ind, ra) - sample_inducing_values(ind, rb)).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("templated covariances agree across double and tape scalars") {
  auto f = [](Tape& t, std::span<const Var> v) {
    std::vector<Var> ls = {v[0]};
    GaussianWindowT<Var> w{v[1], {v[2]}};
    GaussianWindowT<Var> w2{v[3], {v[4]}};
    std::vector<double> x = {0.4}, z = {-0.3};
    return cross_cov_t<Var>(v[5], ls, w, x, z) +
           interdomain_cov_t<Var>(v[5], ls, w, w2, x, z);
  };
  std::vector<double> x0 = {0.8, 0.9, 1.2, 1.1, 0.7, 1.3};
  CHECK(finite_diff_check(f, x0, 1e-5) < 1e-7);

  EqArdKernel k(1.3, {0.8});
  GaussianWindow wa{0.9, {1.2}}, wb{1.1, {0.7}};
  std::vector<double> x = {0.4}, z = {-0.3};
  Tape t;
  std::vector<Var> ls = {t.param(0.8)};
  GaussianWindowT<Var> wav{t.param(0.9), {t.param(1.2)}};
  GaussianWindowT<Var> wbv{t.param(1.1), {t.param(0.7)}};
  CHECK(cross_cov_t<Var>(t.param(1.3), ls, wav, x, z).value() ==
        doctest::Approx(cross_cov(k, wa, x, z)).epsilon(1e-14));
  CHECK(interdomain_cov_t<Var>(t.param(1.3), ls, wav, wbv, x, z).value() ==
        doctest::Approx(interdomain_cov(k, wa, wb, x, z)).epsilon(1e-14));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "npcgp/kernels.hpp"

using namespace npcgp;

TEST_CASE("eq_ard_eval: diagonal, closed form, symmetry") {
  EqArdKernel k(2.0, {1.0, 0.5});
  std::vector<double> x = {0.3, -0.7}, same = {0.3, -0.7};
  CHECK(k.eval(x, same) == doctest::Approx(2.0));

  EqArdKernel k1(1.0, {1.0});
  std::vector<double> a = {0.0}, b = {1.0};
  CHECK(k1.eval(a, b) == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));
  CHECK(k1.eval(b, a) == k1.eval(a, b));

  CHECK_THROWS_AS(EqArdKernel(1.0, {-1.0}), ParameterError);
}

TEST_CASE("dse_eval: window at origin, diagonal decay, closed form") {
  DseKernel k(1.7, 1.0, 0.8);
  CHECK(k.eval(0.0, 0.0) == doctest::Approx(1.7));

  double prev = k.eval(0.0, 0.0);
  for (double t : {0.5, 1.0, 1.5, 2.0}) {
    double v = k.eval(t, t);
    CHECK(v == doctest::Approx(1.7 * std::exp(-2 * 0.8 * t * t)).epsilon(1e-12));
    CHECK(v < prev);
    prev = v;
  }

  DseKernel k2(1.0, 1.0, 0.5);
  CHECK(k2.eval(0.0, 1.0) == doctest::Approx(std::exp(-0.5) * std::exp(-0.5)).epsilon(1e-12));

  CHECK_THROWS_AS(DseKernel(1.0, 1.0, 0.0), ParameterError);
}

TEST_CASE("periodic kernel: period translation leaves periodic factor at 1") {
  PeriodicEqKernel k(1.0, {1.5, 1.5}, {1.8, 2.1});
  std::vector<double> x = {0.4, -0.2};
  for (size_t p = 0; p < 2; ++p) {
    std::vector<double> y = x;
    y[p] += k.periods[p];
    // dividing out the EQ factor isolates the periodic factor
    double eq = std::exp(-0.5 * k.periods[p] * k.periods[p] / (1.5 * 1.5));
    CHECK(k.eval(x, y) / eq == doctest::Approx(k.eval(x, x)).epsilon(1e-9));
  }
}

TEST_CASE("sample_frequencies: RFF covariance matches the kernel") {
  EqArdKernel k(1.3, {0.8, 1.4});
  std::mt19937_64 rng(42);
  const int B = 100000;
  RffDraws d = sample_frequencies(k, B, rng);
  std::vector<double> x = {0.2, -0.5}, y = {-0.4, 0.3};
  double scale = 2.0 * k.variance / B;
  double est = 0.0;
  for (int i = 0; i < B; ++i) {
    double ax = d.theta(i, 0) * x[0] + d.theta(i, 1) * x[1] + d.beta[i];
    double ay = d.theta(i, 0) * y[0] + d.theta(i, 1) * y[1] + d.beta[i];
    est += scale * std::cos(ax) * std::cos(ay);
  }
  CHECK(std::abs(est - k.eval(x, y)) < 0.02);
}

TEST_CASE("sample_frequencies: long lengthscale limit gives a flat basis") {
  EqArdKernel k(1.0, {1e6});
  std::mt19937_64 rng(3);
  RffDraws d = sample_frequencies(k, 2000, rng);
  // evaluate the weighted sample over a grid and check its variance over x
  std::vector<double> fx;
  double scale = std::sqrt(2.0 * k.variance / d.w.size());
  for (double x = -3.0; x <= 3.0; x += 0.25) {
    double f = 0.0;
    for (int i = 0; i < d.w.size(); ++i) f += d.w[i] * scale * std::cos(d.theta(i, 0) * x + d.beta[i]);
    fx.push_back(f);
  }
  double mean = 0.0, var = 0.0;
  for (double v : fx) mean += v;
  mean /= fx.size();
  for (double v : fx) var += (v - mean) * (v - mean);
  var /= fx.size();
  CHECK(var < 0.01 * k.variance);
}

TEST_CASE("sample_frequencies: fixed seed reproduces draws bit for bit") {
  EqArdKernel k(1.0, {1.0, 2.0});
  std::mt19937_64 r1(9), r2(9);
  RffDraws a = sample_frequencies(k, 64, r1);
  RffDraws b = sample_frequencies(k, 64, r2);
  CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.w - b.w).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(sample_frequencies(k, 0, r1), ParameterError);
}

TEST_CASE("rff error decreases with basis count") {
  EqArdKernel k(1.0, {1.0});
  std::vector<double> x = {0.1}, y = {0.9};
  double truth = k.eval(x, y);
  std::vector<double> med_err;
  for (int B : {100, 1000, 10000}) {
    std::vector<double> errs;
    for (int seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(100 + seed);
      RffDraws d = sample_frequencies(k, B, rng);
      double est = 0.0, scale = 2.0 * k.variance / B;
      for (int i = 0; i < B; ++i)
        est += scale * std::cos(d.theta(i, 0) * x[0] + d.beta[i]) *
               std::cos(d.theta(i, 0) * y[0] + d.beta[i]);
      errs.push_back(std::abs(est - truth));
    }
    std::nth_element(errs.begin(), errs.begin() + 10, errs.end());
    med_err.push_back(errs[10]);
  }
  CHECK(med_err[1] < med_err[0]);
  CHECK(med_err[2] < med_err[1]);
}

TEST_CASE("cov_matrix: scalar case, duplicates, factorization identity") {
  EqArdKernel k(1.5, {1.0});
  MatrixXd X1(1, 1);
  X1 << 0.7;
  CovFactor f1 = cov_matrix(k, X1, 1e-6);
  CHECK(f1.K(0, 0) == doctest::Approx(1.5 + 1e-6));

  MatrixXd Xd(4, 1);
  Xd << 0.5, 0.5, -1.0, 2.0;  // duplicated rows
  CovFactor fd = cov_matrix(k, Xd, 1e-6);
  CHECK(fd.L.allFinite());

  std::mt19937_64 rng(5);
  std::normal_distribution<double> norm;
  MatrixXd X(10, 1);
  for (int i = 0; i < 10; ++i) X(i, 0) = norm(rng);
  CovFactor f = cov_matrix(k, X, 1e-6);
  MatrixXd rec = f.L * f.L.transpose();
  CHECK((rec - f.K).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("kernel matrices are PSD before jitter on random inputs") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> norm;
  for (int seed = 0; seed < 10; ++seed) {
    int m = 5 + static_cast<int>(splitmix64(seed) % 26);
    MatrixXd X(m, 2);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < 2; ++j) X(i, j) = norm(rng);
    EqArdKernel k(1.0 + 0.1 * seed, {0.7, 1.3});
    MatrixXd K(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        std::vector<double> xi(X.row(i).begin(), X.row(i).end());
        std::vector<double> xj(X.row(j).begin(), X.row(j).end());
        K(i, j) = k.eval(xi, xj);
      }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(K);
    CHECK(es.eigenvalues().minCoeff() > -1e-8);

    DseKernel dk(1.0, 0.9, 0.4);
    MatrixXd Kd(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) Kd(i, j) = dk.eval(X(i, 0), X(j, 0));
    Eigen::SelfAdjointEigenSolver<MatrixXd> esd(Kd);
    CHECK(esd.eigenvalues().minCoeff() > -1e-8);
  }
}

TEST_CASE("kernel evals on tape agree with double path and differentiate") {
  auto f = [](Tape& t, std::span<const Var> v) {
    std::vector<Var> ls = {v[0], v[1]};
    std::vector<double> x = {0.3, 1.0}, y = {-0.2, 0.4};
    Var kv = eq_ard_eval_t<Var>(v[2], ls, x, y);
    Var dv = dse_eval_t<Var>(v[2], v[0], v[3], 0.5, -0.25);
    return kv + dv;
  };
  std::vector<double> x0 = {0.8, 1.1, 1.4, 0.6};
  CHECK(finite_diff_check(f, x0, 1e-5) < 1e-7);

  Tape t;
  Var var = t.param(1.4), l = t.param(0.8), dec = t.param(0.6);
  std::vector<Var> ls = {l};
  std::vector<double> x = {0.3}, y = {-0.2};
  CHECK(eq_ard_eval_t<Var>(var, ls, x, y).value() ==
        doctest::Approx(EqArdKernel(1.4, {0.8}).eval(x, y)).epsilon(1e-14));
  CHECK(dse_eval_t<Var>(var, l, dec, 0.3, -0.2).value() ==
        doctest::Approx(DseKernel(1.4, 0.8, 0.6).eval(0.3, -0.2)).epsilon(1e-14));
}

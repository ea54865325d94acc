#include "npcgp/kernels.hpp"

namespace npcgp {

namespace {

RffDraws sample_rff(std::span<const double> freq_std, double variance, int basis_count,
                    std::mt19937_64& rng) {
  if (basis_count < 1) throw ParameterError("sample_frequencies: basis count must be >= 1");
  const int P = static_cast<int>(freq_std.size());
  RffDraws out;
  out.theta.resize(basis_count, P);
  out.beta.resize(basis_count);
  out.w.resize(basis_count);
  out.variance = variance;
  std::normal_distribution<double> norm;
  std::uniform_real_distribution<double> unif(0.0, 2.0 * M_PI);
  for (int i = 0; i < basis_count; ++i) {
    for (int p = 0; p < P; ++p) out.theta(i, p) = norm(rng) * freq_std[p];
    out.beta[i] = unif(rng);
    out.w[i] = norm(rng);
  }
  return out;
}

}  // namespace

RffDraws sample_frequencies(const EqArdKernel& k, int basis_count, std::mt19937_64& rng) {
  k.validate();
  std::vector<double> std_per_dim(k.dims());
  for (size_t p = 0; p < k.dims(); ++p) std_per_dim[p] = 1.0 / k.lengthscales[p];
  return sample_rff(std_per_dim, k.variance, basis_count, rng);
}

RffDraws sample_frequencies(const DseKernel& k, int basis_count, std::mt19937_64& rng) {
  k.validate();
  double std1 = 1.0 / k.lengthscale;
  return sample_rff(std::span<const double>(&std1, 1), k.variance, basis_count, rng);
}

}  // namespace npcgp

#include "npcgp/tape.hpp"

#include <Eigen/Dense>

namespace npcgp {

void Tape::backward(const Var& root) {
  if (root.is_const() || root.tape() != this)
    throw StructuralError("backward: root is not a node of this tape");
  const int32_t n = static_cast<int32_t>(val_.size());
  finish_node(n - 1);  // make sure CSR covers every node
  adj_.assign(n, 0.0);
  adj_[root.id()] = 1.0;

  int64_t bi = static_cast<int64_t>(blocks_.size()) - 1;
  for (int32_t i = n - 1; i >= 0; --i) {
    if (bi >= 0 && blocks_[bi].first + blocks_[bi].count - 1 == i) {
      blocks_[bi].op->backward(*this);
      i = blocks_[bi].first;  // loop decrement skips past the block outputs
      --bi;
      continue;
    }
    const double a = adj_[i];
    if (a == 0.0) continue;
    const uint32_t b = edge_begin_[i], e = edge_begin_[i + 1];
    for (uint32_t k = b; k < e; ++k) adj_[eparent_[k]] += epartial_[k] * a;
  }

  if (check_finite) {
    for (int32_t p : params_)
      if (!std::isfinite(adj_[p]))
        throw NumericError("non-finite gradient at parameter node " + std::to_string(p));
  }
}

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct CholeskyBlock : BlockOp {
  std::vector<int32_t> in_ids;  // packed lower of A; -1 for constants
  int32_t out_first = 0;
  int n = 0;
  void backward(Tape& t) override {
    Matrix L = Matrix::Zero(n, n), Lbar = Matrix::Zero(n, n);
    for (int i = 0, k = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j, ++k) {
        L(i, j) = t.value_of(out_first + k);
        Lbar(i, j) = t.adjoint_of(out_first + k);
      }
    // Smith-style pullback: Abar = L^{-T} Phi(L^T Lbar) L^{-1} with Phi
    // zeroing the upper triangle and halving the diagonal.
    Matrix P = (L.transpose() * Lbar).eval();
    P = P.triangularView<Eigen::Lower>();
    P.diagonal() *= 0.5;
    Matrix S = L.transpose().triangularView<Eigen::Upper>().solve(P);
    S = L.transpose()
            .triangularView<Eigen::Upper>()
            .solve(S.transpose())
            .transpose()
            .eval();
    // the packed lower entry (i, j) feeds both A_ij and A_ji
    for (int i = 0, k = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j, ++k) {
        if (in_ids[k] < 0) continue;
        double g = (i == j) ? S(i, i) : S(i, j) + S(j, i);
        t.accumulate_adjoint(in_ids[k], g);
      }
  }
};

struct TriSolveBlock : BlockOp {
  std::vector<int32_t> l_ids;  // packed lower; -1 for constants
  std::vector<int32_t> b_ids;
  int32_t out_first = 0;
  int n = 0;
  bool transposed = false;  // false: L x = b, true: L^T x = b
  Matrix L;                 // dense copy captured at forward time
  Vector x;
  void backward(Tape& t) override {
    Vector xbar(n);
    for (int i = 0; i < n; ++i) xbar[i] = t.adjoint_of(out_first + i);
    if (!transposed) {
      // x = L^{ -1 } b : bbar = L^{-T} xbar, Lbar = -bbar x^T (lower part)
      Vector g = L.transpose().triangularView<Eigen::Upper>().solve(xbar);
      for (int i = 0; i < n; ++i)
        if (b_ids[i] >= 0) t.accumulate_adjoint(b_ids[i], g[i]);
      for (int i = 0, k = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j, ++k)
          if (l_ids[k] >= 0) t.accumulate_adjoint(l_ids[k], -g[i] * x[j]);
    } else {
      // x = L^{-T} b : bbar = L^{-1} xbar, Lbar_{j,i} = -x_j g_i
      Vector g = L.triangularView<Eigen::Lower>().solve(xbar);
      for (int i = 0; i < n; ++i)
        if (b_ids[i] >= 0) t.accumulate_adjoint(b_ids[i], g[i]);
      for (int i = 0, k = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j, ++k)
          if (l_ids[k] >= 0) t.accumulate_adjoint(l_ids[k], -x[i] * g[j]);
    }
  }
};

std::vector<int32_t> ids_of(std::span<const Var> vs) {
  std::vector<int32_t> ids(vs.size());
  for (size_t i = 0; i < vs.size(); ++i) ids[i] = vs[i].is_const() ? -1 : vs[i].id();
  return ids;
}

}  // namespace

std::vector<Var> cholesky_lower(Tape& t, std::span<const Var> packed_a, int n) {
  if (packed_a.size() != packed_size(n))
    throw StructuralError("cholesky_lower: packed size mismatch");
  Matrix A(n, n);
  for (int i = 0, k = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j, ++k) A(i, j) = A(j, i) = packed_a[k].value();
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success)
    throw NumericError("cholesky_lower: matrix not positive definite");
  Matrix L = llt.matrixL();

  std::vector<double> out_vals(packed_size(n));
  for (int i = 0, k = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j, ++k) out_vals[k] = L(i, j);
  int32_t first = t.alloc_block_outputs(out_vals);

  auto op = std::make_unique<CholeskyBlock>();
  op->in_ids = ids_of(packed_a);
  op->out_first = first;
  op->n = n;
  t.register_block(first, static_cast<int32_t>(out_vals.size()), std::move(op));

  std::vector<Var> out;
  out.reserve(out_vals.size());
  for (size_t k = 0; k < out_vals.size(); ++k)
    out.emplace_back(&t, first + static_cast<int32_t>(k), out_vals[k]);
  return out;
}

static std::vector<Var> tri_solve_impl(Tape& t, std::span<const Var> packed_l,
                                       std::span<const Var> b, bool transposed) {
  const int n = static_cast<int>(b.size());
  if (packed_l.size() != packed_size(n)) throw StructuralError("tri_solve: size mismatch");
  Matrix L = Matrix::Zero(n, n);
  for (int i = 0, k = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j, ++k) L(i, j) = packed_l[k].value();
  Vector rhs(n);
  for (int i = 0; i < n; ++i) rhs[i] = b[i].value();
  Vector x = transposed ? Vector(L.transpose().triangularView<Eigen::Upper>().solve(rhs))
                        : Vector(L.triangularView<Eigen::Lower>().solve(rhs));
  if (!x.allFinite()) throw NumericError("tri_solve: non-finite solution");

  std::vector<double> out_vals(x.data(), x.data() + n);
  int32_t first = t.alloc_block_outputs(out_vals);

  auto op = std::make_unique<TriSolveBlock>();
  op->l_ids = ids_of(packed_l);
  op->b_ids = ids_of(b);
  op->out_first = first;
  op->n = n;
  op->transposed = transposed;
  op->L = std::move(L);
  op->x = std::move(x);
  t.register_block(first, n, std::move(op));

  std::vector<Var> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.emplace_back(&t, first + i, out_vals[i]);
  return out;
}

std::vector<Var> tri_solve_lower(Tape& t, std::span<const Var> packed_l, std::span<const Var> b) {
  return tri_solve_impl(t, packed_l, b, false);
}

std::vector<Var> tri_solve_lower_t(Tape& t, std::span<const Var> packed_l, std::span<const Var> b) {
  return tri_solve_impl(t, packed_l, b, true);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw StructuralError("adam_step: length mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    state.first_moment[i] = b1 * state.first_moment[i] + (1.0 - b1) * g;
    state.second_moment[i] = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
    double mhat = state.first_moment[i] / c1;
    double vhat = state.second_moment[i] / c2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double finite_diff_check(const std::function<Var(Tape&, std::span<const Var>)>& f,
                         std::span<const double> x, double h) {
  if (h <= 0) throw ParameterError("finite_diff_check: h must be positive");
  const size_t n = x.size();

  auto eval = [&](std::span<const double> xs, bool with_grad, std::vector<double>* grad_out) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(n);
    for (double v : xs) vars.push_back(t.param(v));
    Var y = f(t, vars);
    if (!std::isfinite(y.value())) throw NumericError("finite_diff_check: non-finite objective");
    if (with_grad) {
      t.backward(y);
      grad_out->resize(n);
      for (size_t i = 0; i < n; ++i) (*grad_out)[i] = t.adjoint(vars[i]);
    }
    return y.value();
  };

  std::vector<double> ad;
  eval(x, true, &ad);

  std::vector<double> xs(x.begin(), x.end());
  double max_err = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double xi = xs[i];
    xs[i] = xi + h;
    double fp = eval(xs, false, nullptr);
    xs[i] = xi - h;
    double fm = eval(xs, false, nullptr);
    xs[i] = xi;
    double fd = (fp - fm) / (2.0 * h);
    double err = std::abs(ad[i] - fd) / (std::abs(fd) + 1e-12);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace npcgp

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "npcgp/common.hpp"

namespace npcgp {

class Tape;

// Handle to a scalar node on a Tape. id < 0 encodes an inline constant, so
// plain double literals flow through templated numeric code without creating
// nodes. Values are computed eagerly at construction time.
class Var {
 public:
  Var() : tape_(nullptr), id_(-1), val_(0.0) {}
  Var(double c) : tape_(nullptr), id_(-1), val_(c) {}  // implicit constant
  Var(Tape* t, int32_t id, double v) : tape_(t), id_(id), val_(v) {}

  double value() const { return val_; }
  int32_t id() const { return id_; }
  bool is_const() const { return id_ < 0; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_;
  int32_t id_;
  double val_;
};

// Multi-output composite op with a hand-written vector-Jacobian product.
// Outputs of a block occupy a contiguous id range; backward() reads the
// adjoints of those outputs and accumulates into the adjoints of its inputs.
struct BlockOp {
  virtual ~BlockOp() = default;
  virtual void backward(Tape& t) = 0;
};

// Reverse-mode scalar tape. Nodes are appended in evaluation order, so one
// reverse sweep visits them in reverse topological order exactly once.
class Tape {
 public:
  Tape() { edge_begin_.push_back(0); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf with requires_grad = true; registered in the parameter list.
  Var param(double v) {
    int32_t id = push_node(v);
    finish_node(id);
    params_.push_back(id);
    return Var(this, id, v);
  }

  // Leaf that participates in the graph but is not a registered parameter
  // (e.g. the inputs to an inner layer of a deep composition).
  Var leaf(double v) {
    int32_t id = push_node(v);
    finish_node(id);
    return Var(this, id, v);
  }

  // Node with explicit parents and local partials; constant parents are
  // dropped. Public builder for composite analytic ops.
  Var custom(double v, std::span<const Var> parents, std::span<const double> partials) {
    if (parents.size() != partials.size())
      throw StructuralError("custom node: parents/partials length mismatch");
    int32_t id = push_node(v);
    for (size_t i = 0; i < parents.size(); ++i) append_edge(id, parents[i], partials[i]);
    finish_node(id);
    return Var(this, id, v);
  }

  Var unary(double v, const Var& p, double d) {
    int32_t id = push_node(v);
    append_edge(id, p, d);
    finish_node(id);
    return Var(this, id, v);
  }

  Var binary(double v, const Var& a, double da, const Var& b, double db) {
    int32_t id = push_node(v);
    append_edge(id, a, da);
    append_edge(id, b, db);
    finish_node(id);
    return Var(this, id, v);
  }

  Var dot(std::span<const Var> a, std::span<const Var> b) {
    if (a.size() != b.size()) throw StructuralError("dot: length mismatch");
    double v = 0;
    for (size_t i = 0; i < a.size(); ++i) v += a[i].value() * b[i].value();
    int32_t id = push_node(v);
    for (size_t i = 0; i < a.size(); ++i) {
      append_edge(id, a[i], b[i].value());
      append_edge(id, b[i], a[i].value());
    }
    finish_node(id);
    return Var(this, id, v);
  }

  Var dot(std::span<const Var> a, std::span<const double> b) {
    if (a.size() != b.size()) throw StructuralError("dot: length mismatch");
    double v = 0;
    for (size_t i = 0; i < a.size(); ++i) v += a[i].value() * b[i];
    int32_t id = push_node(v);
    for (size_t i = 0; i < a.size(); ++i) append_edge(id, a[i], b[i]);
    finish_node(id);
    return Var(this, id, v);
  }

  Var sum(std::span<const Var> a) {
    double v = 0;
    for (const Var& x : a) v += x.value();
    int32_t id = push_node(v);
    for (const Var& x : a) append_edge(id, x, 1.0);
    finish_node(id);
    return Var(this, id, v);
  }

  // Reserves fresh output nodes for a block op and returns the first id.
  int32_t alloc_block_outputs(std::span<const double> values) {
    int32_t first = static_cast<int32_t>(val_.size());
    for (double v : values) push_node(v);
    finish_node(first + static_cast<int32_t>(values.size()) - 1);
    return first;
  }

  void register_block(int32_t first, int32_t count, std::unique_ptr<BlockOp> op) {
    blocks_.push_back(BlockRec{first, count, std::move(op)});
  }

  void backward(const Var& root);

  double adjoint(const Var& v) const { return v.is_const() ? 0.0 : adj_[v.id()]; }
  double adjoint_of(int32_t id) const { return adj_[id]; }
  void accumulate_adjoint(int32_t id, double g) { adj_[id] += g; }
  double value_of(int32_t id) const { return val_[id]; }

  // d(root)/d(p) for every registered parameter p; parameters unreachable
  // from the root keep gradient 0. Valid after backward().
  std::unordered_map<int32_t, double> gradient_map() const {
    std::unordered_map<int32_t, double> g;
    g.reserve(params_.size());
    for (int32_t p : params_) g.emplace(p, adj_.empty() ? 0.0 : adj_[p]);
    return g;
  }

  const std::vector<int32_t>& params() const { return params_; }
  size_t size() const { return val_.size(); }
  size_t num_edges() const { return eparent_.size(); }

  // Drops all nodes but keeps allocated capacity; called once per iteration.
  void reset() {
    val_.clear();
    adj_.clear();
    edge_begin_.clear();
    edge_begin_.push_back(0);
    eparent_.clear();
    epartial_.clear();
    params_.clear();
    blocks_.clear();
  }

  bool check_finite = true;

 private:
  int32_t push_node(double v) {
    if (check_finite && !std::isfinite(v))
      throw NumericError("non-finite value at tape node " + std::to_string(val_.size()));
    val_.push_back(v);
    return static_cast<int32_t>(val_.size() - 1);
  }

  void append_edge(int32_t id, const Var& parent, double partial) {
    if (parent.is_const()) return;
    if (parent.tape() != this)
      throw StructuralError("tape edge across tapes");
    if (parent.id() >= id) throw StructuralError("tape edge to a non-earlier node (cycle)");
    eparent_.push_back(parent.id());
    epartial_.push_back(partial);
  }

  // edge_begin_ is CSR-style: entry i..i+1 brackets the edges of node i.
  // Nodes skipped between finishes get empty edge ranges.
  void finish_node(int32_t id) {
    while (static_cast<int32_t>(edge_begin_.size()) <= id + 1)
      edge_begin_.push_back(static_cast<uint32_t>(eparent_.size()));
    edge_begin_[id + 1] = static_cast<uint32_t>(eparent_.size());
  }

  std::vector<double> val_;
  std::vector<double> adj_;
  std::vector<uint32_t> edge_begin_;
  std::vector<int32_t> eparent_;
  std::vector<double> epartial_;
  std::vector<int32_t> params_;

  struct BlockRec {
    int32_t first, count;
    std::unique_ptr<BlockOp> op;
  };
  std::vector<BlockRec> blocks_;
};

// ---- scalar arithmetic ----

namespace detail {
inline Tape* tape_of(const Var& a, const Var& b) {
  Tape* t = a.is_const() ? b.tape() : a.tape();
  if (!a.is_const() && !b.is_const() && a.tape() != b.tape())
    throw StructuralError("mixing nodes from different tapes");
  return t;
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  if (a.is_const() && b.is_const()) return Var(a.value() + b.value());
  if (a.is_const()) return b.tape()->unary(a.value() + b.value(), b, 1.0);
  if (b.is_const()) return a.tape()->unary(a.value() + b.value(), a, 1.0);
  return detail::tape_of(a, b)->binary(a.value() + b.value(), a, 1.0, b, 1.0);
}

inline Var operator-(const Var& a, const Var& b) {
  if (a.is_const() && b.is_const()) return Var(a.value() - b.value());
  if (a.is_const()) return b.tape()->unary(a.value() - b.value(), b, -1.0);
  if (b.is_const()) return a.tape()->unary(a.value() - b.value(), a, 1.0);
  return detail::tape_of(a, b)->binary(a.value() - b.value(), a, 1.0, b, -1.0);
}

inline Var operator*(const Var& a, const Var& b) {
  if (a.is_const() && b.is_const()) return Var(a.value() * b.value());
  if (a.is_const()) return b.tape()->unary(a.value() * b.value(), b, a.value());
  if (b.is_const()) return a.tape()->unary(a.value() * b.value(), a, b.value());
  return detail::tape_of(a, b)->binary(a.value() * b.value(), a, b.value(), b, a.value());
}

inline Var operator/(const Var& a, const Var& b) {
  double bv = b.value();
  double v = a.value() / bv;
  if (a.is_const() && b.is_const()) return Var(v);
  if (b.is_const()) return a.tape()->unary(v, a, 1.0 / bv);
  if (a.is_const()) return b.tape()->unary(v, b, -v / bv);
  return detail::tape_of(a, b)->binary(v, a, 1.0 / bv, b, -v / bv);
}

inline Var operator-(const Var& a) {
  if (a.is_const()) return Var(-a.value());
  return a.tape()->unary(-a.value(), a, -1.0);
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline Var exp(const Var& a) {
  double v = std::exp(a.value());
  if (a.is_const()) return Var(v);
  return a.tape()->unary(v, a, v);
}

inline Var log(const Var& a) {
  double v = std::log(a.value());
  if (a.is_const()) return Var(v);
  return a.tape()->unary(v, a, 1.0 / a.value());
}

inline Var sqrt(const Var& a) {
  double v = std::sqrt(a.value());
  if (a.is_const()) return Var(v);
  return a.tape()->unary(v, a, 0.5 / v);
}

inline Var sin(const Var& a) {
  if (a.is_const()) return Var(std::sin(a.value()));
  return a.tape()->unary(std::sin(a.value()), a, std::cos(a.value()));
}

inline Var cos(const Var& a) {
  if (a.is_const()) return Var(std::cos(a.value()));
  return a.tape()->unary(std::cos(a.value()), a, -std::sin(a.value()));
}

inline Var square(const Var& a) {
  double v = a.value() * a.value();
  if (a.is_const()) return Var(v);
  return a.tape()->unary(v, a, 2.0 * a.value());
}

// Double passthroughs so templated numeric code instantiates for both plain
// doubles and tape nodes without implicit Var promotion.
inline double value(double x) { return x; }
inline double value(const Var& x) { return x.value(); }
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double square(double x) { return x * x; }

// ---- linear algebra blocks (implemented in tape.cpp) ----

// Lower-triangular matrices are packed row-major: (i, j<=i) -> i*(i+1)/2 + j.
inline size_t packed_index(size_t i, size_t j) { return i * (i + 1) / 2 + j; }
inline size_t packed_size(size_t n) { return n * (n + 1) / 2; }

// Cholesky factor of the symmetric matrix whose lower triangle is `packed_a`.
// Throws NumericError if the matrix is not positive definite.
std::vector<Var> cholesky_lower(Tape& t, std::span<const Var> packed_a, int n);

// Solves L x = b (lower triangular, packed L).
std::vector<Var> tri_solve_lower(Tape& t, std::span<const Var> packed_l, std::span<const Var> b);

// Solves L^T x = b.
std::vector<Var> tri_solve_lower_t(Tape& t, std::span<const Var> packed_l, std::span<const Var> b);

// ---- Adam ----

// Defaults: beta1 = 0.9, beta2 = 0.999, eps = 1e-8; only the learning rate
// is problem specific.
struct AdamState {
  explicit AdamState(size_t n, double lr_ = 1e-3)
      : first_moment(n, 0.0), second_moment(n, 0.0), lr(lr_) {}
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  int64_t step_count = 0;
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam update with bias correction, applied in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// ---- finite difference harness ----

// Central-difference check of the tape gradient of f at x. Returns
// max_i |ad_i - fd_i| / (|fd_i| + 1e-12).
double finite_diff_check(const std::function<Var(Tape&, std::span<const Var>)>& f,
                         std::span<const double> x, double h);

}  // namespace npcgp

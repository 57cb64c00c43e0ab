#include "rdm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rdm/kernels.hpp"

namespace rdm {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "(" << t.rows() << "," << t.cols() << ")";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

std::shared_ptr<TensorNode> make_node(int64_t rows, int64_t cols) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("tensor dimensions must be positive");
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->val.assign(static_cast<size_t>(rows * cols), 0.0);
  return n;
}

bool want_grad(const Tensor& a) { return g_active_tape != nullptr && a.requires_grad(); }

void ensure_grad(const std::shared_ptr<TensorNode>& n) {
  if (n->grad.empty()) n->grad.assign(n->val.size(), 0.0);
}

// Output grad of a node, or nullptr if no gradient ever reached it.
const std::vector<double>* out_grad(const std::shared_ptr<TensorNode>& n) {
  return n->grad.empty() ? nullptr : &n->grad;
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(int64_t rows, int64_t cols) { return Tensor(make_node(rows, cols)); }

Tensor Tensor::full(int64_t rows, int64_t cols, double value) {
  auto n = make_node(rows, cols);
  std::fill(n->val.begin(), n->val.end(), value);
  return Tensor(std::move(n));
}

Tensor Tensor::from_vec(int64_t rows, int64_t cols, std::vector<double> values) {
  if (static_cast<int64_t>(values.size()) != rows * cols)
    throw std::invalid_argument("from_vec: data length does not match shape");
  auto n = make_node(rows, cols);
  n->val = std::move(values);
  return Tensor(std::move(n));
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar, shape " + shape_str(*this));
  return n_->val[0];
}

std::vector<double>& Tensor::grad() {
  ensure_grad(n_);
  return n_->grad;
}

const std::vector<double>& Tensor::grad() const {
  ensure_grad(n_);
  return n_->grad;
}

void Tensor::zero_grad() {
  n_->grad.assign(n_->val.size(), 0.0);
}

Tensor Tensor::clone() const {
  auto n = make_node(rows(), cols());
  n->val = n_->val;
  return Tensor(std::move(n));
}

// ---- Tape -------------------------------------------------------------------

Tape::Tape() {
  if (g_active_tape != nullptr) throw std::logic_error("Tape: another tape is already active on this thread");
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = nullptr; }

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  auto n = loss.node();
  ensure_grad(n);
  n->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

// ---- op implementations -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  kernels::matmul(a.data(), b.data(), out.data(), m, k, n);
  const bool ga = want_grad(a), gb = want_grad(b);
  if (ga || gb) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on, m, k, n, ga, gb]() {
      const auto* og = out_grad(on);
      if (!og) return;
      if (ga) {
        ensure_grad(an);
        std::vector<double> tmp(static_cast<size_t>(m * k));
        kernels::matmul_transposed_b(og->data(), bn->val.data(), tmp.data(), m, n, k);
        for (size_t i = 0; i < tmp.size(); ++i) an->grad[i] += tmp[i];
      }
      if (gb) {
        ensure_grad(bn);
        std::vector<double> tmp(static_cast<size_t>(k * n));
        kernels::matmul_transposed_a(an->val.data(), og->data(), tmp.data(), k, m, n);
        for (size_t i = 0; i < tmp.size(); ++i) bn->grad[i] += tmp[i];
      }
    });
  }
  return out;
}

namespace {

// Shared core for add/sub. sign = +1 or -1 applied to b.
Tensor add_like(const char* name, const Tensor& a, const Tensor& b, double sign) {
  const bool same = a.rows() == b.rows() && a.cols() == b.cols();
  const bool bcast_b = !same && b.rows() == 1 && a.cols() == b.cols();
  const bool bcast_a = !same && !bcast_b && a.rows() == 1 && a.cols() == b.cols();
  if (!same && !bcast_b && !bcast_a) shape_error(name, a, b);

  const Tensor& big = bcast_a ? b : a;
  Tensor out = Tensor::zeros(big.rows(), big.cols());
  const int64_t rows = out.rows(), cols = out.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* ra = bcast_a ? pa : pa + r * cols;
    const double* rb = bcast_b ? pb : pb + r * cols;
    double* ro = po + r * cols;
    for (int64_t c = 0; c < cols; ++c) ro[c] = ra[c] + sign * rb[c];
  }

  const bool ga = want_grad(a), gb = want_grad(b);
  if (ga || gb) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on, rows, cols, ga, gb, bcast_a, bcast_b, sign]() {
      const auto* og = out_grad(on);
      if (!og) return;
      if (ga) {
        ensure_grad(an);
        if (bcast_a) {
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) an->grad[c] += (*og)[r * cols + c];
        } else {
          for (size_t i = 0; i < og->size(); ++i) an->grad[i] += (*og)[i];
        }
      }
      if (gb) {
        ensure_grad(bn);
        if (bcast_b) {
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) bn->grad[c] += sign * (*og)[r * cols + c];
        } else {
          for (size_t i = 0; i < og->size(); ++i) bn->grad[i] += sign * (*og)[i];
        }
      }
    });
  }
  return out;
}

// Elementwise unary with derivative expressed from (x, y).
template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  const double* px = x.data();
  double* po = out.data();
  const size_t n = x.values().size();
  for (size_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  if (want_grad(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, bwd]() {
      const auto* og = out_grad(on);
      if (!og) return;
      ensure_grad(xn);
      for (size_t i = 0; i < og->size(); ++i) xn->grad[i] += (*og)[i] * bwd(xn->val[i], on->val[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_like("add", a, b, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_like("sub", a, b, -1.0); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  const size_t n = out.values().size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  const bool ga = want_grad(a), gb = want_grad(b);
  if (ga || gb) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on, ga, gb]() {
      const auto* og = out_grad(on);
      if (!og) return;
      if (ga) {
        ensure_grad(an);
        for (size_t i = 0; i < og->size(); ++i) an->grad[i] += (*og)[i] * bn->val[i];
      }
      if (gb) {
        ensure_grad(bn);
        for (size_t i = 0; i < og->size(); ++i) bn->grad[i] += (*og)[i] * an->val[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  return unary_op(
      x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor hardtanh(const Tensor& x, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("hardtanh: requires lo < hi");
  return unary_op(
      x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

namespace {

Tensor reduce_op(const Tensor& x, bool take_mean) {
  Tensor out = Tensor::zeros(1, 1);
  const size_t n = x.values().size();
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += x.data()[i];
  const double denom = take_mean ? static_cast<double>(n) : 1.0;
  out.data()[0] = acc / denom;
  if (want_grad(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, denom]() {
      const auto* og = out_grad(on);
      if (!og) return;
      ensure_grad(xn);
      const double g = (*og)[0] / denom;
      for (auto& gi : xn->grad) gi += g;
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_op(x, false); }
Tensor mean(const Tensor& x) { return reduce_op(x, true); }

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mse", a, b);
  Tensor out = Tensor::zeros(1, 1);
  const size_t n = a.values().size();
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  out.data()[0] = acc / static_cast<double>(n);
  const bool ga = want_grad(a), gb = want_grad(b);
  if (ga || gb) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on, ga, gb, n]() {
      const auto* og = out_grad(on);
      if (!og) return;
      const double g = 2.0 * (*og)[0] / static_cast<double>(n);
      if (ga) ensure_grad(an);
      if (gb) ensure_grad(bn);
      for (size_t i = 0; i < n; ++i) {
        const double d = an->val[i] - bn->val[i];
        if (ga) an->grad[i] += g * d;
        if (gb) bn->grad[i] -= g * d;
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: needs at least one input");
  const int64_t rows = xs[0].rows();
  int64_t cols = 0;
  bool any_grad = false;
  for (const auto& x : xs) {
    if (x.rows() != rows) shape_error("concat", xs[0], x);
    cols += x.cols();
    any_grad = any_grad || want_grad(x);
  }
  Tensor out = Tensor::zeros(rows, cols);
  int64_t off = 0;
  for (const auto& x : xs) {
    for (int64_t r = 0; r < rows; ++r)
      std::copy_n(x.data() + r * x.cols(), x.cols(), out.data() + r * cols + off);
    off += x.cols();
  }
  if (any_grad) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorNode>> nodes;
    std::vector<bool> grads;
    for (const auto& x : xs) {
      nodes.push_back(x.node());
      grads.push_back(want_grad(x));
    }
    auto on = out.node();
    Tape::active()->record([nodes, grads, on, rows, cols]() {
      const auto* og = out_grad(on);
      if (!og) return;
      int64_t off2 = 0;
      for (size_t i = 0; i < nodes.size(); ++i) {
        const int64_t w = nodes[i]->cols;
        if (grads[i]) {
          ensure_grad(nodes[i]);
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < w; ++c) nodes[i]->grad[r * w + c] += (*og)[r * cols + off2 + c];
        }
        off2 += w;
      }
    });
  }
  return out;
}

namespace {

Tensor slice_impl(const Tensor& x, int64_t r0, int64_t r1, int64_t c0, int64_t c1) {
  if (r0 < 0 || r1 > x.rows() || r0 >= r1 || c0 < 0 || c1 > x.cols() || c0 >= c1)
    throw std::invalid_argument("slice: range out of bounds for shape " + std::to_string(x.rows()) + "x" +
                                std::to_string(x.cols()));
  const int64_t rows = r1 - r0, cols = c1 - c0;
  Tensor out = Tensor::zeros(rows, cols);
  for (int64_t r = 0; r < rows; ++r)
    std::copy_n(x.data() + (r0 + r) * x.cols() + c0, cols, out.data() + r * cols);
  if (want_grad(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, r0, c0, rows, cols]() {
      const auto* og = out_grad(on);
      if (!og) return;
      ensure_grad(xn);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) xn->grad[(r0 + r) * xn->cols + c0 + c] += (*og)[r * cols + c];
    });
  }
  return out;
}

}  // namespace

Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1) { return slice_impl(x, r0, r1, 0, x.cols()); }
Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) { return slice_impl(x, 0, x.rows(), c0, c1); }

Tensor reshape(const Tensor& x, int64_t rows, int64_t cols) {
  if (rows * cols != x.numel())
    throw std::invalid_argument("reshape: element count mismatch for shape " + shape_str(x));
  Tensor out = Tensor::zeros(rows, cols);
  out.values() = x.values();
  if (want_grad(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    Tape::active()->record([xn, on]() {
      const auto* og = out_grad(on);
      if (!og) return;
      ensure_grad(xn);
      for (size_t i = 0; i < og->size(); ++i) xn->grad[i] += (*og)[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  const int64_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(c, r);
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.data()[j * r + i] = x.data()[i * c + j];
  if (want_grad(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, r, c]() {
      const auto* og = out_grad(on);
      if (!og) return;
      ensure_grad(xn);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) xn->grad[i * c + j] += (*og)[j * r + i];
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  const int64_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(r, c);
  for (int64_t i = 0; i < r; ++i) {
    const double* xi = x.data() + i * c;
    double* oi = out.data() + i * c;
    double mx = xi[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      oi[j] = std::exp(xi[j] - mx);
      z += oi[j];
    }
    for (int64_t j = 0; j < c; ++j) oi[j] /= z;
  }
  if (want_grad(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, r, c]() {
      const auto* og = out_grad(on);
      if (!og) return;
      ensure_grad(xn);
      for (int64_t i = 0; i < r; ++i) {
        const double* yi = on->val.data() + i * c;
        const double* gi = og->data() + i * c;
        double dot = 0.0;
        for (int64_t j = 0; j < c; ++j) dot += yi[j] * gi[j];
        for (int64_t j = 0; j < c; ++j) xn->grad[i * c + j] += yi[j] * (gi[j] - dot);
      }
    });
  }
  return out;
}

Tensor forward_op(OpKind kind, const std::vector<Tensor>& in, const OpAttrs& attrs) {
  auto need = [&](size_t n) {
    if (in.size() != n)
      throw std::invalid_argument("forward_op: wrong input count " + std::to_string(in.size()));
  };
  switch (kind) {
    case OpKind::kMatmul: need(2); return matmul(in[0], in[1]);
    case OpKind::kAdd: need(2); return add(in[0], in[1]);
    case OpKind::kSub: need(2); return sub(in[0], in[1]);
    case OpKind::kMul: need(2); return mul(in[0], in[1]);
    case OpKind::kScale: need(1); return scale(in[0], attrs.c);
    case OpKind::kExp: need(1); return exp(in[0]);
    case OpKind::kTanh: need(1); return tanh(in[0]);
    case OpKind::kSigmoid: need(1); return sigmoid(in[0]);
    case OpKind::kHardtanh: need(1); return hardtanh(in[0], attrs.lo, attrs.hi);
    case OpKind::kSum: need(1); return sum(in[0]);
    case OpKind::kMean: need(1); return mean(in[0]);
    case OpKind::kConcat: return concat_cols(in);
    case OpKind::kSlice: {
      need(1);
      const int64_t r1 = attrs.r1 < 0 ? in[0].rows() : attrs.r1;
      const int64_t c1 = attrs.c1 < 0 ? in[0].cols() : attrs.c1;
      return slice_impl(in[0], attrs.r0, r1, attrs.c0, c1);
    }
    case OpKind::kMse: need(2); return mse(in[0], in[1]);
    case OpKind::kTranspose: need(1); return transpose(in[0]);
    case OpKind::kSoftmaxRows: need(1); return softmax_rows(in[0]);
  }
  throw std::invalid_argument("forward_op: unknown op kind");
}

// ---- helpers ----------------------------------------------------------------

Tensor randn(Rng& rng, int64_t rows, int64_t cols, double stddev) {
  Tensor t = Tensor::zeros(rows, cols);
  rng.fill_normal(t.data(), t.values().size(), stddev);
  return t;
}

bool all_finite(const Tensor& x) {
  for (double v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

double max_abs(const Tensor& x) {
  double m = 0.0;
  for (double v : x.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("max_abs_diff", a, b);
  double m = 0.0;
  for (size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// ---- ParamStore / Adam ---------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  t.set_requires_grad(true);
  auto [it, ok] = params_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

int64_t ParamStore::total_entries() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void adam_step(ParamStore& params, AdamState& state) {
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (auto& [name, p] : params) {
    if (!p.has_grad()) throw std::invalid_argument("adam_step: missing grad for parameter '" + name + "'");
    auto& g = p.grad();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    if (m.size() != g.size() || v.size() != g.size())
      throw std::invalid_argument("adam_step: state shape mismatch for parameter '" + name + "'");
    double* pv = p.data();
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      pv[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    p.zero_grad();
  }
}

double grad_check(const std::function<Tensor(ParamStore&)>& f, ParamStore& params, double eps) {
  if (eps < 1e-7 || eps > 1e-3) throw std::invalid_argument("grad_check: eps must be in [1e-7, 1e-3]");

  params.zero_grad();
  {
    Tape tape;
    Tensor loss = f(params);
    if (!std::isfinite(loss.item())) throw numerical_error("grad_check: non-finite loss");
    tape.backward(loss);
  }
  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, p] : params) analytic[name] = p.grad();

  auto eval = [&]() {
    Tensor loss = f(params);  // no active tape: value only
    const double v = loss.item();
    if (!std::isfinite(v)) throw numerical_error("grad_check: non-finite loss during finite differences");
    return v;
  };

  double max_err = 0.0;
  for (auto& [name, p] : params) {
    double* pv = p.data();
    const auto& a = analytic[name];
    for (size_t i = 0; i < p.values().size(); ++i) {
      const double orig = pv[i];
      pv[i] = orig + eps;
      const double fp = eval();
      pv[i] = orig - eps;
      const double fm = eval();
      pv[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double err = std::abs(a[i] - fd) / std::max(1.0, std::abs(a[i]));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace rdm

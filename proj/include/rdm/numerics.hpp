#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rdm/rng.hpp"

namespace rdm {

// Raised when a computation produced non-finite values or a numerical
// procedure cannot continue. The CLI maps this to exit code 3.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised on malformed files (bad magic, truncation, version mismatch).
// The CLI maps this, like std::invalid_argument, to exit code 2.
class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorNode {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> val;
  std::vector<double> grad;  // allocated lazily, same size as val once present
  bool requires_grad = false;
};

// Dense row-major matrix of 64-bit floats with an optional gradient buffer.
// Scalars are 1x1, vectors 1xn. Copies are shallow (shared storage); ops
// return fresh tensors.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int64_t rows, int64_t cols);
  static Tensor full(int64_t rows, int64_t cols, double value);
  static Tensor scalar(double value) { return full(1, 1, value); }
  static Tensor from_vec(int64_t rows, int64_t cols, std::vector<double> values);

  bool defined() const { return n_ != nullptr; }
  int64_t rows() const { return n_->rows; }
  int64_t cols() const { return n_->cols; }
  int64_t numel() const { return n_->rows * n_->cols; }

  double* data() { return n_->val.data(); }
  const double* data() const { return n_->val.data(); }
  std::vector<double>& values() { return n_->val; }
  const std::vector<double>& values() const { return n_->val; }
  double operator()(int64_t r, int64_t c) const { return n_->val[r * n_->cols + c]; }
  double& at(int64_t r, int64_t c) { return n_->val[r * n_->cols + c]; }
  double item() const;

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    n_->requires_grad = rg;
    return *this;
  }

  bool has_grad() const { return n_ && !n_->grad.empty(); }
  std::vector<double>& grad();        // allocates zeroed buffer on first use
  const std::vector<double>& grad() const;
  void zero_grad();

  // Deep copy of values (fresh storage, no grad, requires_grad off).
  Tensor clone() const;

  std::shared_ptr<TensorNode> node() const { return n_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}
  std::shared_ptr<TensorNode> n_;

  friend class Tape;
};

// Records backward closures in execution order; backward() replays them in
// reverse. One tape per training step, single-threaded, rebuilt every step.
// Constructing a Tape installs it as the thread-local active tape; ops
// record onto it automatically when an input requires grad.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }
  size_t size() const { return ops_.size(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates exact reverse-mode gradients
  // into every reachable tensor's grad buffer. Throws if loss is not scalar.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> ops_;
};

// ---- differentiable ops ----------------------------------------------------
// Shape errors throw std::invalid_argument naming the op and both shapes.
// add/sub accept equal shapes or a 1xN operand broadcast across rows.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor exp(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor hardtanh(const Tensor& x, double lo, double hi);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1);
Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1);
Tensor reshape(const Tensor& x, int64_t rows, int64_t cols);
Tensor transpose(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

enum class OpKind {
  kMatmul,
  kAdd,
  kMul,
  kSub,
  kScale,
  kExp,
  kTanh,
  kSigmoid,
  kHardtanh,
  kSum,
  kMean,
  kConcat,
  kSlice,
  kMse,
  kTranspose,
  kSoftmaxRows,
};

struct OpAttrs {
  double c = 1.0;        // scale factor
  double lo = -1.0;      // hardtanh bounds
  double hi = 1.0;
  int64_t r0 = 0, r1 = -1;  // slice row range [r0, r1); r1 < 0 means all rows
  int64_t c0 = 0, c1 = -1;  // slice col range
};

// Generic dispatcher over the op vocabulary above; the named functions are
// the primary API, this exists for uniform surface tests.
Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});

// ---- helpers ----------------------------------------------------------------

Tensor randn(Rng& rng, int64_t rows, int64_t cols, double stddev = 1.0);
bool all_finite(const Tensor& x);
double max_abs(const Tensor& x);
double max_abs_diff(const Tensor& a, const Tensor& b);

// ---- parameters & optimizer --------------------------------------------------

// Named parameter map. std::map keeps iteration deterministic (lexicographic).
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  size_t size() const { return params_.size(); }
  void zero_grad();
  int64_t total_entries() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step_count = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// Standard Adam with bias correction. Consumes and clears the grads.
// Throws std::invalid_argument naming the parameter if its grad is missing.
void adam_step(ParamStore& params, AdamState& state);

// Max over all parameter entries of |analytic - central difference| /
// max(1, |analytic|) for the scalar function f. eps must be in [1e-7, 1e-3].
double grad_check(const std::function<Tensor(ParamStore&)>& f, ParamStore& params, double eps = 1e-5);

}  // namespace rdm

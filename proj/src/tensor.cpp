#include "wildsam/tensor.hpp"

#include <cmath>
#include <sstream>

namespace wildsam {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

double* TensorImpl::grad_ptr() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad.data();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto p = std::make_shared<TensorImpl>();
  p->data.assign(static_cast<size_t>(numel(shape)), 0.0);
  p->shape = std::move(shape);
  p->requires_grad = requires_grad;
  p->needs_grad = requires_grad;
  return Tensor(std::move(p));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t = zeros(std::move(shape));
  for (auto& x : t.data()) x = v;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (static_cast<int64_t>(data.size()) != numel(shape))
    throw DimensionError("from_data: " + shape_str(shape) + " needs " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  auto p = std::make_shared<TensorImpl>();
  p->shape = std::move(shape);
  p->data = std::move(data);
  p->requires_grad = requires_grad;
  p->needs_grad = requires_grad;
  return Tensor(std::move(p));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

int Tensor::dim(int i) const {
  if (i < 0) i += ndim();
  if (i < 0 || i >= ndim()) throw DimensionError("dim index out of range");
  return p_->shape[static_cast<size_t>(i)];
}

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() on non-scalar tensor");
  return p_->data[0];
}

void Tensor::set_requires_grad(bool v) {
  p_->requires_grad = v;
  p_->needs_grad = v;
}

void Tensor::zero_grad() { p_->grad.clear(); }

namespace {
thread_local GradientTape* g_current_tape = nullptr;
}

GradientTape::GradientTape() {
  prev_ = g_current_tape;
  g_current_tape = this;
}

GradientTape::~GradientTape() { g_current_tape = prev_; }

GradientTape* GradientTape::current() { return g_current_tape; }

void GradientTape::record(std::function<void()> fn) {
  entries_.push_back(std::move(fn));
}

void GradientTape::backward(const Tensor& loss) {
  if (consumed_) throw UsageError("backward called twice on the same tape");
  if (loss.size() != 1) throw UsageError("backward requires a scalar loss");
  if (!loss.impl()->needs_grad)
    throw UsageError("loss does not depend on any tracked tensor");
  consumed_ = true;
  loss.impl()->grad_ptr()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

void backward(const Tensor& loss) {
  GradientTape* t = GradientTape::current();
  if (!t) throw UsageError("backward called without a live tape");
  t->backward(loss);
}

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.data())
    if (!std::isfinite(v))
      throw UsageError(std::string("non-finite value produced by ") + what);
}

}  // namespace wildsam

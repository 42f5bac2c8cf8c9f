#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace wildsam {

class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& m) : std::runtime_error(m) {}
};

class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& m) : std::runtime_error(m) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

using Shape = std::vector<int>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;  // trainable leaf
  bool needs_grad = false;     // participates in the current backward pass

  double* grad_ptr();  // lazily allocates a zeroed buffer
};

// Value-semantics handle over a shared dense buffer. Row-major, double.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> p) : p_(std::move(p)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return p_ != nullptr; }
  const Shape& shape() const { return p_->shape; }
  int dim(int i) const;
  int ndim() const { return static_cast<int>(p_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(p_->data.size()); }

  std::vector<double>& data() { return p_->data; }
  const std::vector<double>& data() const { return p_->data; }
  double& at(int64_t i) { return p_->data[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return p_->data[static_cast<size_t>(i)]; }
  double item() const;

  bool requires_grad() const { return p_->requires_grad; }
  void set_requires_grad(bool v);
  const std::vector<double>& grad() const { return p_->grad; }
  void zero_grad();

  std::shared_ptr<TensorImpl> impl() const { return p_; }

 private:
  std::shared_ptr<TensorImpl> p_;
};

// Define-by-run gradient tape. Constructing a tape makes it current for the
// thread; ops executed while a tape is live record their backward closures.
class GradientTape {
 public:
  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  void record(std::function<void()> fn);
  void backward(const Tensor& loss);
  bool consumed() const { return consumed_; }
  size_t num_entries() const { return entries_.size(); }

  static GradientTape* current();

 private:
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
  GradientTape* prev_ = nullptr;
};

// Runs reverse-mode accumulation on the current tape. Errors if no tape is
// live, the loss is not scalar, or the tape was already consumed.
void backward(const Tensor& loss);

void check_finite(const Tensor& t, const char* what);

}  // namespace wildsam

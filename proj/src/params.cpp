#include "wildsam/params.hpp"

#include <cmath>

#include "wildsam/rng.hpp"

namespace wildsam {

Tensor ParamStore::add(const std::string& name, Tensor t, bool trainable) {
  if (index_.count(name))
    throw UsageError("duplicate parameter name: " + name);
  t.set_requires_grad(trainable);
  index_[name] = params_.size();
  params_.push_back({name, t, trainable});
  return t;
}

Tensor ParamStore::create_zeros(const std::string& name, Shape shape,
                                bool trainable) {
  return add(name, Tensor::zeros(std::move(shape)), trainable);
}

Tensor ParamStore::create_const(const std::string& name, Shape shape, double v,
                                bool trainable) {
  return add(name, Tensor::full(std::move(shape), v), trainable);
}

Tensor ParamStore::create_normal(const std::string& name, Shape shape,
                                 double stddev, bool trainable) {
  Rng rng = derive_rng(seed_, name);
  return add(name, randn(std::move(shape), rng, stddev), trainable);
}

Tensor ParamStore::create_kaiming(const std::string& name, Shape shape,
                                  int64_t fan_in, bool trainable) {
  return create_normal(name, std::move(shape),
                       std::sqrt(2.0 / static_cast<double>(fan_in)),
                       trainable);
}

Tensor ParamStore::adopt(const std::string& name, Tensor t, bool trainable) {
  return add(name, std::move(t), trainable);
}

const Param* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

int64_t ParamStore::total_count() const {
  int64_t n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

int64_t ParamStore::trainable_count() const {
  int64_t n = 0;
  for (const Param& p : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (Param& p : params_) p.value.zero_grad();
}

}  // namespace wildsam

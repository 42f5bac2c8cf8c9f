#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "wildsam/tensor.hpp"

namespace wildsam {

struct Param {
  std::string name;
  Tensor value;
  bool trainable = false;
};

// Registry of named parameters. Initialization depends only on
// (store seed, parameter name), so models sharing a seed produce identical
// weights for identically named parameters regardless of creation order.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : seed_(seed) {}

  Tensor create_zeros(const std::string& name, Shape shape, bool trainable);
  Tensor create_const(const std::string& name, Shape shape, double v,
                      bool trainable);
  Tensor create_normal(const std::string& name, Shape shape, double stddev,
                       bool trainable);
  // He-style init: stddev = sqrt(2 / fan_in).
  Tensor create_kaiming(const std::string& name, Shape shape, int64_t fan_in,
                        bool trainable);
  // Registers an externally built tensor (e.g. a fixed kernel).
  Tensor adopt(const std::string& name, Tensor t, bool trainable);

  const std::vector<Param>& all() const { return params_; }
  std::vector<Param>& all() { return params_; }
  const Param* find(const std::string& name) const;
  uint64_t seed() const { return seed_; }

  int64_t total_count() const;
  int64_t trainable_count() const;
  void zero_grads();

 private:
  Tensor add(const std::string& name, Tensor t, bool trainable);
  uint64_t seed_;
  std::vector<Param> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace wildsam

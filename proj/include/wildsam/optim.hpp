#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "wildsam/params.hpp"

namespace wildsam {

struct AdamWConfig {
  double lr = 1e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled-weight-decay Adam. Moment state exists only for trainable
// parameters; frozen parameters are never touched.
class AdamW {
 public:
  AdamW(ParamStore& store, AdamWConfig cfg);

  // One update from the gradients currently accumulated on the parameters.
  // Throws if a trainable parameter has no gradient buffer.
  void step();

  int64_t t() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  ParamStore& store_;
  AdamWConfig cfg_;
  std::unordered_map<std::string, Moments> state_;
  int64_t t_ = 0;
};

}  // namespace wildsam

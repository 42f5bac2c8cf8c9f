#include "wildsam/optim.hpp"

#include <cmath>

namespace wildsam {

AdamW::AdamW(ParamStore& store, AdamWConfig cfg) : store_(store), cfg_(cfg) {
  if (cfg_.lr < 0 || cfg_.weight_decay < 0 || cfg_.eps <= 0 ||
      cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1)
    throw ConfigError("adamw: invalid hyperparameters");
  for (const auto& p : store_.all()) {
    if (!p.trainable) continue;
    auto& mo = state_[p.name];
    mo.m.assign(static_cast<size_t>(p.value.size()), 0.0);
    mo.v.assign(static_cast<size_t>(p.value.size()), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : store_.all()) {
    if (!p.trainable) continue;
    const auto& g = p.value.grad();
    if (g.empty())
      throw UsageError("adamw: trainable parameter '" + p.name +
                       "' has no gradient");
    auto& mo = state_[p.name];
    auto& theta = p.value.data();
    for (size_t i = 0; i < theta.size(); ++i) {
      mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g[i];
      mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      theta[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                             cfg_.weight_decay * theta[i]);
    }
  }
}

}  // namespace wildsam

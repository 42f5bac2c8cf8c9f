#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "wildsam/model.hpp"
#include "wildsam/optim.hpp"
#include "wildsam/phase_io.hpp"

namespace wildsam {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  AdamWConfig optim{};  // lr 1e-5 by default; toy runs typically use 1e-3
  double lambda_dice = 1.0;
  uint64_t seed = 1;
  int image_size = 64;
  // adapters on the last two blocks by default (mid-capacity setting)
  ModelConfig model{ViTConfig{}, {2, 3}};
  SceneParams scene{};
  int n_train = 512;
  int n_val = 128;

  void validate() const;
};

// Flat "key = value" text, '#' comments, nesting via dotted keys
// (e.g. "vit.embed_dim = 64", "adapter_layers = 2,3",
// "expert_mask = 1,1,1,1"). Unknown keys are an error.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
std::string dump_config(const TrainConfig& cfg);

// Raw key/value split shared with the ablation grid parser.
std::map<std::string, std::string> parse_kv(const std::string& text);

}  // namespace wildsam

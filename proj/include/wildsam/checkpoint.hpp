#pragma once

#include <string>

#include "wildsam/config.hpp"
#include "wildsam/model.hpp"

namespace wildsam {

// Checkpoint file: a length-prefixed text manifest (format tag, the config
// snapshot, and one line per tensor: name, dtype, shape, byte offset,
// trainable flag) followed by concatenated little-endian float32 payloads.
//
// Saving rounds the in-memory parameters to float32 as well, so an
// evaluation after save matches an evaluation after load exactly.
void save_checkpoint(const std::string& path, WildSamModel& model,
                     const TrainConfig& cfg);

struct LoadedCheckpoint {
  TrainConfig config;
  std::unique_ptr<WildSamModel> model;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace wildsam

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "wildsam/config.hpp"
#include "wildsam/metrics.hpp"
#include "wildsam/model.hpp"
#include "wildsam/phase_io.hpp"

namespace wildsam {

// Deterministic per-patch seed for a named split of a run seed.
uint64_t patch_seed(uint64_t base, const std::string& split, int index);

std::vector<PatchRecord> make_split(uint64_t base, const std::string& split,
                                    int count, const SceneParams& p,
                                    int size);

struct PatchMetrics {
  int patch_id = 0;
  SegMetrics m{};
};

struct EpochRecord {
  double train_loss = 0.0;
  MetricsSummary val{};
};

struct RunReport {
  std::vector<EpochRecord> epochs;  // entry 0 is the untrained model
  std::vector<PatchMetrics> final_val_records;
  std::string config_text;
  double wall_seconds = 0.0;
  int64_t total_params = 0;
  int64_t trainable_params = 0;

  std::string to_json() const;
};

struct TrainResult {
  RunReport report;
  std::unique_ptr<WildSamModel> model;
};

// Full training run: synthesizes the train/val splits from cfg.seed, runs
// shuffled minibatch AdamW, evaluates the validation split every epoch.
TrainResult train(const TrainConfig& cfg);

// Forward-only evaluation of a model on a patch set.
std::vector<PatchMetrics> evaluate(const WildSamModel& model,
                                   const std::vector<PatchRecord>& patches,
                                   int batch_size = 8);

// Finite-difference check of the analytic gradients through the full loss.
struct GradcheckModuleResult {
  std::string module;
  int probes = 0;
  double max_rel_err = 0.0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckModuleResult> modules;
  double max_rel_err = 0.0;
  int total_probes = 0;
  bool passed(double tol = 1e-4) const { return max_rel_err <= tol; }
  std::string to_json() const;
};

GradcheckReport gradcheck(const TrainConfig& cfg, int n_probes);

// One ablation cell: a named override set applied to a base config.
struct AblationCell {
  std::string name;
  std::map<std::string, std::string> overrides;
};

std::vector<AblationCell> parse_grid(const std::string& text);
TrainConfig apply_overrides(const TrainConfig& base,
                            const std::map<std::string, std::string>& kv);

struct AblationRow {
  std::string name;
  int64_t trainable_params = 0;
  RunReport report;
};

std::vector<AblationRow> ablate(const TrainConfig& base,
                                const std::vector<AblationCell>& grid);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_json(const std::vector<AblationRow>& rows);

// Batched forward over normalized patches; logits [B,S,S].
Tensor forward_batch(const WildSamModel& model,
                     const std::vector<PatchRecord>& patches, size_t begin,
                     size_t end);
Tensor batch_targets(const std::vector<PatchRecord>& patches, size_t begin,
                     size_t end);

}  // namespace wildsam

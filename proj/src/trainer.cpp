#include "wildsam/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "json.hpp"

#include "wildsam/decoder.hpp"
#include "wildsam/ops.hpp"
#include "wildsam/optim.hpp"
#include "wildsam/rng.hpp"

namespace wildsam {

using json = nlohmann::json;

uint64_t patch_seed(uint64_t base, const std::string& split, int index) {
  Rng r(base ^ hash_name(split) ^
        (static_cast<uint64_t>(index) * 0x9e3779b97f4a7c15ULL));
  return r.next_u64();
}

std::vector<PatchRecord> make_split(uint64_t base, const std::string& split,
                                    int count, const SceneParams& p,
                                    int size) {
  std::vector<PatchRecord> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(synth_scene(patch_seed(base, split, i), p, size, size));
  return out;
}

Tensor forward_batch(const WildSamModel& model,
                     const std::vector<PatchRecord>& patches, size_t begin,
                     size_t end) {
  const int s = model.config().vit.image_size;
  const int b = static_cast<int>(end - begin);
  Tensor img = Tensor::zeros({b, 3, s, s});
  const int64_t per = static_cast<int64_t>(3) * s * s;
  for (size_t i = begin; i < end; ++i) {
    const auto& r = patches[i];
    if (r.interferogram.height != s || r.interferogram.width != s)
      throw DimensionError("patch size does not match model input size");
    Tensor one = normalize_for_backbone(encode_channels(r.interferogram));
    std::copy(one.data().begin(), one.data().end(),
              img.data().begin() + static_cast<int64_t>(i - begin) * per);
  }
  return model.forward(img);
}

Tensor batch_targets(const std::vector<PatchRecord>& patches, size_t begin,
                     size_t end) {
  const int h = patches[begin].mask.height;
  const int w = patches[begin].mask.width;
  const int b = static_cast<int>(end - begin);
  Tensor t = Tensor::zeros({b, h, w});
  int64_t k = 0;
  for (size_t i = begin; i < end; ++i)
    for (uint8_t v : patches[i].mask.values) t.at(k++) = v ? 1.0 : 0.0;
  return t;
}

std::vector<PatchMetrics> evaluate(const WildSamModel& model,
                                   const std::vector<PatchRecord>& patches,
                                   int batch_size) {
  std::vector<PatchMetrics> out;
  const int s = model.config().vit.image_size;
  const size_t n = patches.size();
  for (size_t begin = 0; begin < n;
       begin += static_cast<size_t>(batch_size)) {
    size_t end = std::min(n, begin + static_cast<size_t>(batch_size));
    Tensor logits = forward_batch(model, patches, begin, end);
    const int64_t per = static_cast<int64_t>(s) * s;
    for (size_t i = begin; i < end; ++i) {
      std::vector<uint8_t> pred(static_cast<size_t>(per));
      const double* z =
          logits.data().data() + static_cast<int64_t>(i - begin) * per;
      for (int64_t k = 0; k < per; ++k) pred[static_cast<size_t>(k)] = z[k] > 0.0;
      PatchMetrics pm;
      pm.patch_id = static_cast<int>(i);
      pm.m = compute_metrics(pred, patches[i].mask.values, s, s);
      out.push_back(pm);
    }
  }
  return out;
}

namespace {

json metrics_json(const MetricsSummary& s) {
  return json{{"precision", s.precision}, {"recall", s.recall},
              {"iou", s.iou},             {"dice", s.dice},
              {"hd", s.hd},               {"count", s.count},
              {"hd_defined_count", s.hd_defined_count}};
}

MetricsSummary summarize_patches(const std::vector<PatchMetrics>& records) {
  std::vector<SegMetrics> ms;
  ms.reserve(records.size());
  for (const auto& r : records) ms.push_back(r.m);
  return summarize(ms);
}

}  // namespace

std::string RunReport::to_json() const {
  json j;
  j["config"] = config_text;
  j["wall_seconds"] = wall_seconds;
  j["total_params"] = total_params;
  j["trainable_params"] = trainable_params;
  j["epochs"] = json::array();
  for (const auto& e : epochs)
    j["epochs"].push_back(
        {{"train_loss", e.train_loss}, {"val", metrics_json(e.val)}});
  j["final_val_records"] = json::array();
  for (const auto& r : final_val_records)
    j["final_val_records"].push_back({{"patch_id", r.patch_id},
                                      {"precision", r.m.precision},
                                      {"recall", r.m.recall},
                                      {"iou", r.m.iou},
                                      {"dice", r.m.dice},
                                      {"hd", r.m.hd},
                                      {"hd_defined", r.m.hd_defined}});
  return j.dump(2);
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto train_set =
      make_split(cfg.seed, "train", cfg.n_train, cfg.scene, cfg.image_size);
  auto val_set =
      make_split(cfg.seed, "val", cfg.n_val, cfg.scene, cfg.image_size);

  TrainResult res;
  res.model = std::make_unique<WildSamModel>(cfg.model, cfg.seed);
  WildSamModel& model = *res.model;
  AdamW opt(model.params(), cfg.optim);
  Rng shuffle_rng(cfg.seed ^ hash_name("shuffle"));

  res.report.config_text = dump_config(cfg);
  res.report.total_params = model.params().total_count();
  res.report.trainable_params = model.params().trainable_count();

  auto eval_epoch = [&](double loss) {
    EpochRecord rec;
    rec.train_loss = loss;
    res.report.final_val_records = evaluate(model, val_set, cfg.batch_size);
    rec.val = summarize_patches(res.report.final_val_records);
    res.report.epochs.push_back(rec);
  };

  eval_epoch(0.0);  // untrained reference point

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<PatchRecord> batch_view;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(shuffle_rng.uniform_int(
                    static_cast<int>(i)))]);
    double loss_sum = 0.0;
    int n_batches = 0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(),
                            begin + static_cast<size_t>(cfg.batch_size));
      batch_view.clear();
      for (size_t i = begin; i < end; ++i)
        batch_view.push_back(train_set[order[i]]);
      model.params().zero_grads();
      GradientTape tape;
      Tensor logits = forward_batch(model, batch_view, 0, batch_view.size());
      Tensor targets = batch_targets(batch_view, 0, batch_view.size());
      Tensor loss = total_loss(logits, targets, cfg.lambda_dice);
      backward(loss);
      opt.step();
      loss_sum += loss.item();
      ++n_batches;
    }
    eval_epoch(n_batches > 0 ? loss_sum / n_batches : 0.0);
  }

  res.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return res;
}

// ---- gradcheck -------------------------------------------------------------

namespace {

std::string module_of(const std::string& param_name) {
  if (param_name.rfind("adapter.", 0) == 0) return "pa_moe";
  if (param_name.rfind("wgse.", 0) == 0) return "wgse";
  if (param_name.rfind("backbone.", 0) == 0) return "backbone";
  return "decoder_loss";
}

}  // namespace

std::string GradcheckReport::to_json() const {
  json j;
  j["max_rel_err"] = max_rel_err;
  j["total_probes"] = total_probes;
  j["passed"] = passed();
  j["modules"] = json::array();
  for (const auto& m : modules)
    j["modules"].push_back({{"module", m.module},
                            {"probes", m.probes},
                            {"max_rel_err", m.max_rel_err},
                            {"worst_param", m.worst_param},
                            {"worst_analytic", m.worst_analytic},
                            {"worst_fd", m.worst_fd}});
  return j.dump(2);
}

GradcheckReport gradcheck(const TrainConfig& cfg, int n_probes) {
  cfg.validate();
  if (n_probes < 1) throw UsageError("gradcheck: n_probes must be >= 1");
  auto patches = make_split(cfg.seed, "gradcheck", 2, cfg.scene,
                            cfg.image_size);
  WildSamModel model(cfg.model, cfg.seed);
  // lift the alpha gates off zero so adapter gradients are not vacuously
  // zero; everything else stays at its init, which is a well-conditioned
  // operating point (broad jitter makes the loss surface so curved that
  // central differences at eps 1e-5 stop resolving the true slope)
  Rng jitter(cfg.seed ^ hash_name("gradcheck-jitter"));
  for (auto& p : model.params().all()) {
    if (!p.trainable) continue;
    if (p.value.size() == 1 && p.name.rfind("backbone.", 0) == 0) {
      p.value.at(0) = jitter.uniform(0.25, 0.75);
    } else if (p.name == "wgse.proj.w") {
      // the prompt projection is zero at init, which would leave every
      // parameter upstream of it with an identically zero gradient
      for (double& v : p.value.data()) v = jitter.uniform(-0.1, 0.1);
    }
  }
  Tensor targets = batch_targets(patches, 0, patches.size());

  auto loss_value = [&]() {
    Tensor logits = forward_batch(model, patches, 0, patches.size());
    return total_loss(logits, targets, cfg.lambda_dice).item();
  };

  model.params().zero_grads();
  {
    GradientTape tape;
    Tensor logits = forward_batch(model, patches, 0, patches.size());
    Tensor loss = total_loss(logits, targets, cfg.lambda_dice);
    backward(loss);
  }

  // group trainable parameters by module
  std::map<std::string, std::vector<Param*>> groups;
  for (auto& p : model.params().all())
    if (p.trainable) groups[module_of(p.name)].push_back(&p);
  if (groups.empty()) throw UsageError("gradcheck: no trainable parameters");

  GradcheckReport rep;
  Rng rng(cfg.seed ^ hash_name("gradcheck-probes"));
  const int per_module =
      (n_probes + static_cast<int>(groups.size()) - 1) /
      static_cast<int>(groups.size());
  for (auto& [module, params] : groups) {
    GradcheckModuleResult mr;
    mr.module = module;
    for (int k = 0; k < per_module; ++k) {
      Param* p = params[static_cast<size_t>(
          rng.uniform_int(static_cast<int>(params.size())))];
      int64_t idx = rng.uniform_int(static_cast<int>(p->value.size()));
      double analytic =
          p->value.grad().empty() ? 0.0 : p->value.grad()[static_cast<size_t>(idx)];
      double saved = p->value.at(idx);
      // descending step ladder: central-difference truncation is O(eps^2),
      // so where the loss is strongly curved (stacked softmax routers make
      // third derivatives large) a coarse step misreads the slope; a finer
      // step recovers it, while a wrong backward rule disagrees with the
      // finite difference by the scale of the gradient at every step size.
      // the 1e-3 floor in the denominator keeps roundoff (~ulp(loss)/eps
      // absolute) from dominating probes whose true gradient is tiny.
      double rel = 0.0, fd = 0.0;
      for (double eps : {1e-5, 1e-6, 1e-7}) {
        p->value.at(idx) = saved + eps;
        double lp = loss_value();
        p->value.at(idx) = saved - eps;
        double lm = loss_value();
        p->value.at(idx) = saved;
        double fd_e = (lp - lm) / (2.0 * eps);
        double denom = std::max({std::abs(analytic), std::abs(fd_e), 1e-3});
        double rel_e = std::abs(analytic - fd_e) / denom;
        if (eps == 1e-5 || rel_e < rel) { rel = rel_e; fd = fd_e; }
        if (rel <= 1e-6) break;
      }
      if (rel > mr.max_rel_err) {
        mr.max_rel_err = rel;
        mr.worst_param = p->name;
        mr.worst_analytic = analytic;
        mr.worst_fd = fd;
      }
      ++mr.probes;
    }
    rep.total_probes += mr.probes;
    rep.max_rel_err = std::max(rep.max_rel_err, mr.max_rel_err);
    rep.modules.push_back(mr);
  }
  return rep;
}

// ---- ablation --------------------------------------------------------------

std::vector<AblationCell> parse_grid(const std::string& text) {
  std::vector<AblationCell> cells;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);

    std::vector<std::string> parts;
    std::stringstream ls(line);
    std::string part;
    while (std::getline(ls, part, '|')) parts.push_back(part);
    if (parts.empty())
      throw ConfigError("grid line " + std::to_string(lineno) + ": empty");
    AblationCell cell;
    auto a = parts[0].find_first_not_of(" \t");
    auto b = parts[0].find_last_not_of(" \t");
    if (a == std::string::npos)
      throw ConfigError("grid line " + std::to_string(lineno) +
                        ": missing cell name");
    cell.name = parts[0].substr(a, b - a + 1);
    std::string kv_text;
    for (size_t i = 1; i < parts.size(); ++i) kv_text += parts[i] + "\n";
    cell.overrides = parse_kv(kv_text);
    cells.push_back(cell);
  }
  if (cells.empty()) throw UsageError("ablation grid is empty");
  return cells;
}

TrainConfig apply_overrides(const TrainConfig& base,
                            const std::map<std::string, std::string>& kv) {
  auto merged = parse_kv(dump_config(base));
  for (const auto& [k, v] : kv) merged[k] = v;
  std::string text;
  for (const auto& [k, v] : merged) text += k + " = " + v + "\n";
  return parse_config(text);
}

std::vector<AblationRow> ablate(const TrainConfig& base,
                                const std::vector<AblationCell>& grid) {
  if (grid.empty()) throw UsageError("ablation grid is empty");
  std::vector<AblationRow> rows;
  for (const auto& cell : grid) {
    TrainConfig cfg = apply_overrides(base, cell.overrides);
    TrainResult res = train(cfg);
    AblationRow row;
    row.name = cell.name;
    row.trainable_params = res.report.trainable_params;
    row.report = std::move(res.report);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream o;
  o.precision(10);
  o << "name,trainable_params,val_precision,val_recall,val_iou,val_dice,"
       "val_hd,final_train_loss\n";
  for (const auto& r : rows) {
    const auto& last = r.report.epochs.back();
    o << r.name << "," << r.trainable_params << "," << last.val.precision
      << "," << last.val.recall << "," << last.val.iou << ","
      << last.val.dice << "," << last.val.hd << "," << last.train_loss
      << "\n";
  }
  return o.str();
}

std::string ablation_json(const std::vector<AblationRow>& rows) {
  json j = json::array();
  for (const auto& r : rows) {
    const auto& last = r.report.epochs.back();
    j.push_back({{"name", r.name},
                 {"trainable_params", r.trainable_params},
                 {"val", metrics_json(last.val)},
                 {"final_train_loss", last.train_loss},
                 {"wall_seconds", r.report.wall_seconds}});
  }
  return j.dump(2);
}

}  // namespace wildsam

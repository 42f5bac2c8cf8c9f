#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "wildsam/checkpoint.hpp"
#include "wildsam/kernels.hpp"
#include "wildsam/trainer.hpp"

namespace fs = std::filesystem;
using namespace wildsam;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream o(p);
  if (!o) throw FormatError("cannot write " + p.string());
  o << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Float feature planes in the IGRAM container layout: the mask section is
// absent and each channel is stored as one H x W float32 plane.
void write_feature(const fs::path& path, const Tensor& t) {
  if (t.ndim() != 4 || t.dim(0) != 1)
    throw UsageError("write_feature expects a [1,C,H,W] tensor");
  std::ofstream o(path, std::ios::binary);
  if (!o) throw FormatError("cannot write " + path.string());
  o.write("IGRF", 4);
  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    o.write(reinterpret_cast<char*>(b), 4);
  };
  put_u32(1);
  put_u32(static_cast<uint32_t>(t.dim(1)));
  put_u32(static_cast<uint32_t>(t.dim(2)));
  put_u32(static_cast<uint32_t>(t.dim(3)));
  std::vector<float> buf(static_cast<size_t>(t.size()));
  for (size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<float>(t.data()[i]);
  o.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * 4));
}

std::vector<PatchRecord> load_dir(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw UsageError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".igram") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw FormatError("no .igram patches in " + dir.string());
  std::vector<PatchRecord> out;
  for (const auto& f : files) out.push_back(read_patch(f.string()));
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"wrapped-phase landslide segmentation harness"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "write synthetic patches");
  uint64_t gen_seed = 1;
  int gen_count = 16;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "base seed");
  gen->add_option("--count", gen_count, "number of patches")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  int gen_size = 64;
  gen->add_option("--size", gen_size, "patch side length");

  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_out;
  tr->add_option("--config", tr_config, "config file")->required();
  tr->add_option("--out", tr_out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data;
  uint64_t ev_seed = 0;
  int ev_count = 0;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "directory of .igram patches");
  ev->add_option("--seed", ev_seed, "synthesis seed");
  ev->add_option("--count", ev_count, "synthesized patch count");

  auto* ab = app.add_subcommand("ablate", "run an ablation grid");
  std::string ab_config, ab_grid, ab_out;
  ab->add_option("--config", ab_config, "base config file")->required();
  ab->add_option("--grid", ab_grid, "grid file")->required();
  ab->add_option("--out", ab_out, "output directory (default: cwd)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check");
  std::string gc_config;
  int gc_probes = 200;
  gc->add_option("--config", gc_config, "config file")->required();
  gc->add_option("--probes", gc_probes, "number of probed parameters");

  auto* df = app.add_subcommand("dump-features",
                                "write tap and prompt tensors for a patch");
  std::string df_ckpt, df_patch, df_out;
  df->add_option("--checkpoint", df_ckpt, "checkpoint file")->required();
  df->add_option("--patch", df_patch, "input .igram patch")->required();
  df->add_option("--out", df_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (*gen) {
    if (gen_count < 1) throw UsageError("gen: --count must be >= 1");
    fs::create_directories(gen_out);
    SceneParams p;
    for (int i = 0; i < gen_count; ++i) {
      PatchRecord r =
          synth_scene(patch_seed(gen_seed, "gen", i), p, gen_size, gen_size);
      std::ostringstream name;
      name << "patch_" << std::setw(5) << std::setfill('0') << i << ".igram";
      write_patch(r, (fs::path(gen_out) / name.str()).string());
    }
    std::cout << "wrote " << gen_count << " patches to " << gen_out << "\n";
    return 0;
  }

  if (*tr) {
    TrainConfig cfg = load_config(tr_config);
    fs::create_directories(tr_out);
    TrainResult res = train(cfg);
    write_text(fs::path(tr_out) / "report.json", res.report.to_json());
    save_checkpoint((fs::path(tr_out) / "model.ckpt").string(), *res.model,
                    cfg);
    const auto& last = res.report.epochs.back();
    std::cout << "final val dice " << last.val.dice << ", iou "
              << last.val.iou << " (" << res.report.trainable_params << "/"
              << res.report.total_params << " trainable params)\n";
    return 0;
  }

  if (*ev) {
    if (ev_data.empty() == (ev_count == 0))
      throw UsageError("eval: pass exactly one of --data or --seed/--count");
    LoadedCheckpoint ck = load_checkpoint(ev_ckpt);
    std::vector<PatchRecord> patches;
    std::string provenance;
    if (!ev_data.empty()) {
      patches = load_dir(ev_data);
      provenance = "dir:" + ev_data;
    } else {
      patches = make_split(ev_seed, "eval", ev_count, ck.config.scene,
                           ck.config.image_size);
      provenance = "seed:" + std::to_string(ev_seed);
    }
    auto records = evaluate(*ck.model, patches, ck.config.batch_size);
    std::vector<SegMetrics> ms;
    for (const auto& r : records) ms.push_back(r.m);
    MetricsSummary s = summarize(ms);
    std::cout << "split " << provenance << ": n=" << s.count
              << " precision=" << s.precision << " recall=" << s.recall
              << " iou=" << s.iou << " dice=" << s.dice << " hd=" << s.hd
              << " (defined on " << s.hd_defined_count << ")\n";
    return 0;
  }

  if (*ab) {
    TrainConfig base = load_config(ab_config);
    auto grid = parse_grid(read_text(ab_grid));
    auto rows = ablate(base, grid);
    fs::path out_dir = ab_out.empty() ? fs::current_path() : fs::path(ab_out);
    fs::create_directories(out_dir);
    write_text(out_dir / "ablation.csv", ablation_csv(rows));
    write_text(out_dir / "ablation.json", ablation_json(rows));
    std::cout << ablation_csv(rows);
    return 0;
  }

  if (*gc) {
    TrainConfig cfg = load_config(gc_config);
    GradcheckReport rep = gradcheck(cfg, gc_probes);
    std::cout << rep.to_json() << "\n";
    return rep.passed() ? 0 : 3;
  }

  if (*df) {
    LoadedCheckpoint ck = load_checkpoint(df_ckpt);
    PatchRecord patch = read_patch(df_patch);
    fs::create_directories(df_out);
    const int s = ck.config.image_size;
    Tensor enc = normalize_for_backbone(encode_channels(patch.interferogram));
    if (enc.size() != static_cast<int64_t>(3) * s * s)
      throw FormatError("patch size does not match checkpoint input size");
    Tensor img = Tensor::from_data({1, 3, s, s}, enc.data());
    auto detail = ck.model->forward_detail(img);
    write_feature(fs::path(df_out) / "tap.feat", detail.tap);
    if (detail.prompt.defined())
      write_feature(fs::path(df_out) / "prompt.feat", detail.prompt);
    std::cout << "wrote features to " << df_out << "\n";
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

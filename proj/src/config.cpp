#include "wildsam/config.hpp"

#include <fstream>
#include <sstream>

namespace wildsam {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (optim.lr < 0 || optim.weight_decay < 0)
    throw ConfigError("rates/decays must be nonnegative");
  if (lambda_dice < 0) throw ConfigError("lambda_dice must be >= 0");
  if (n_train < 0 || n_val < 0) throw ConfigError("patch counts must be >= 0");
  if (image_size != model.vit.image_size)
    throw ConfigError("image_size must match vit.image_size");
  model.validate();
  scene.validate();
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v +
                      "'");
  }
}

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v +
                      "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v +
                    "'");
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    if (kv.count(key))
      throw ConfigError("config: duplicate key '" + key + "'");
    kv[key] = val;
  }
  return kv;
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  for (const auto& [key, val] : parse_kv(text)) {
    if (key == "epochs") cfg.epochs = static_cast<int>(to_int(key, val));
    else if (key == "batch_size")
      cfg.batch_size = static_cast<int>(to_int(key, val));
    else if (key == "lr") cfg.optim.lr = to_double(key, val);
    else if (key == "weight_decay") cfg.optim.weight_decay = to_double(key, val);
    else if (key == "beta1") cfg.optim.beta1 = to_double(key, val);
    else if (key == "beta2") cfg.optim.beta2 = to_double(key, val);
    else if (key == "eps") cfg.optim.eps = to_double(key, val);
    else if (key == "lambda_dice") cfg.lambda_dice = to_double(key, val);
    else if (key == "seed")
      cfg.seed = static_cast<uint64_t>(to_int(key, val));
    else if (key == "image_size") {
      cfg.image_size = static_cast<int>(to_int(key, val));
      cfg.model.vit.image_size = cfg.image_size;
    } else if (key == "vit.patch_size")
      cfg.model.vit.patch_size = static_cast<int>(to_int(key, val));
    else if (key == "vit.embed_dim")
      cfg.model.vit.embed_dim = static_cast<int>(to_int(key, val));
    else if (key == "vit.heads")
      cfg.model.vit.heads = static_cast<int>(to_int(key, val));
    else if (key == "vit.depth")
      cfg.model.vit.depth = static_cast<int>(to_int(key, val));
    else if (key == "vit.mlp_ratio")
      cfg.model.vit.mlp_ratio = static_cast<int>(to_int(key, val));
    else if (key == "adapter_layers") {
      cfg.model.adapter_layers.clear();
      if (val != "none" && !val.empty())
        for (const auto& tok : split_commas(val))
          cfg.model.adapter_layers.insert(static_cast<int>(to_int(key, tok)));
    } else if (key == "expert_mask") {
      auto toks = split_commas(val);
      if (toks.size() != 4)
        throw ConfigError("config: expert_mask needs 4 comma-separated flags");
      for (int i = 0; i < 4; ++i)
        cfg.model.expert_mask[static_cast<size_t>(i)] = to_bool(key, toks[static_cast<size_t>(i)]);
    } else if (key == "wgse_enabled")
      cfg.model.wgse_enabled = to_bool(key, val);
    else if (key == "tap_block")
      cfg.model.tap_block = static_cast<int>(to_int(key, val));
    else if (key == "scene.n_bowls")
      cfg.scene.n_bowls = static_cast<int>(to_int(key, val));
    else if (key == "scene.amp_lo") cfg.scene.amp_lo = to_double(key, val);
    else if (key == "scene.amp_hi") cfg.scene.amp_hi = to_double(key, val);
    else if (key == "scene.sigma_lo") cfg.scene.sigma_lo = to_double(key, val);
    else if (key == "scene.sigma_hi") cfg.scene.sigma_hi = to_double(key, val);
    else if (key == "scene.ramp_grad_lo")
      cfg.scene.ramp_grad_lo = to_double(key, val);
    else if (key == "scene.ramp_grad_hi")
      cfg.scene.ramp_grad_hi = to_double(key, val);
    else if (key == "scene.noise_sigma_lo")
      cfg.scene.noise_sigma_lo = to_double(key, val);
    else if (key == "scene.noise_sigma_hi")
      cfg.scene.noise_sigma_hi = to_double(key, val);
    else if (key == "scene.mask_threshold")
      cfg.scene.mask_threshold = to_double(key, val);
    else if (key == "n_train")
      cfg.n_train = static_cast<int>(to_int(key, val));
    else if (key == "n_val") cfg.n_val = static_cast<int>(to_int(key, val));
    else
      throw ConfigError("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const TrainConfig& cfg) {
  std::ostringstream o;
  o.precision(17);
  o << "epochs = " << cfg.epochs << "\n";
  o << "batch_size = " << cfg.batch_size << "\n";
  o << "lr = " << cfg.optim.lr << "\n";
  o << "weight_decay = " << cfg.optim.weight_decay << "\n";
  o << "beta1 = " << cfg.optim.beta1 << "\n";
  o << "beta2 = " << cfg.optim.beta2 << "\n";
  o << "eps = " << cfg.optim.eps << "\n";
  o << "lambda_dice = " << cfg.lambda_dice << "\n";
  o << "seed = " << cfg.seed << "\n";
  o << "image_size = " << cfg.image_size << "\n";
  o << "vit.patch_size = " << cfg.model.vit.patch_size << "\n";
  o << "vit.embed_dim = " << cfg.model.vit.embed_dim << "\n";
  o << "vit.heads = " << cfg.model.vit.heads << "\n";
  o << "vit.depth = " << cfg.model.vit.depth << "\n";
  o << "vit.mlp_ratio = " << cfg.model.vit.mlp_ratio << "\n";
  o << "adapter_layers = ";
  if (cfg.model.adapter_layers.empty()) {
    o << "none";
  } else {
    bool first = true;
    for (int b : cfg.model.adapter_layers) {
      if (!first) o << ",";
      o << b;
      first = false;
    }
  }
  o << "\n";
  o << "expert_mask = ";
  for (int i = 0; i < 4; ++i)
    o << (cfg.model.expert_mask[static_cast<size_t>(i)] ? "1" : "0")
      << (i < 3 ? "," : "\n");
  o << "wgse_enabled = " << (cfg.model.wgse_enabled ? "true" : "false")
    << "\n";
  o << "tap_block = " << cfg.model.tap_block << "\n";
  o << "scene.n_bowls = " << cfg.scene.n_bowls << "\n";
  o << "scene.amp_lo = " << cfg.scene.amp_lo << "\n";
  o << "scene.amp_hi = " << cfg.scene.amp_hi << "\n";
  o << "scene.sigma_lo = " << cfg.scene.sigma_lo << "\n";
  o << "scene.sigma_hi = " << cfg.scene.sigma_hi << "\n";
  o << "scene.ramp_grad_lo = " << cfg.scene.ramp_grad_lo << "\n";
  o << "scene.ramp_grad_hi = " << cfg.scene.ramp_grad_hi << "\n";
  o << "scene.noise_sigma_lo = " << cfg.scene.noise_sigma_lo << "\n";
  o << "scene.noise_sigma_hi = " << cfg.scene.noise_sigma_hi << "\n";
  o << "scene.mask_threshold = " << cfg.scene.mask_threshold << "\n";
  o << "n_train = " << cfg.n_train << "\n";
  o << "n_val = " << cfg.n_val << "\n";
  return o.str();
}

}  // namespace wildsam

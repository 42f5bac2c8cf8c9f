#include "wildsam/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace wildsam {

namespace {

void put_u64(std::ostream& o, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw FormatError("checkpoint: truncated length prefix");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, WildSamModel& model,
                     const TrainConfig& cfg) {
  // round in place first so the saved state matches the live model
  for (auto& p : model.params().all())
    for (double& x : p.value.data()) x = static_cast<double>(static_cast<float>(x));

  std::ostringstream manifest;
  manifest << "format wildsam-checkpoint 1\n";
  std::string cfg_text = dump_config(cfg);
  manifest << "config " << cfg_text.size() << "\n" << cfg_text;
  uint64_t offset = 0;
  const auto& params = model.params().all();
  manifest << "tensors " << params.size() << "\n";
  for (const auto& p : params) {
    manifest << p.name << " f32 ";
    const Shape& s = p.value.shape();
    for (size_t i = 0; i < s.size(); ++i)
      manifest << s[i] << (i + 1 < s.size() ? "x" : "");
    manifest << " " << offset << " " << (p.trainable ? 1 : 0) << "\n";
    offset += static_cast<uint64_t>(p.value.size()) * 4;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot open for write: " + path);
  const std::string m = manifest.str();
  put_u64(out, m.size());
  out.write(m.data(), static_cast<std::streamsize>(m.size()));
  std::vector<float> buf;
  for (const auto& p : params) {
    buf.resize(static_cast<size_t>(p.value.size()));
    for (size_t i = 0; i < buf.size(); ++i)
      buf[i] = static_cast<float>(p.value.data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * 4));
  }
  if (!out) throw FormatError("checkpoint: write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open: " + path);
  uint64_t mlen = get_u64(in);
  std::string manifest(mlen, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw FormatError("checkpoint: truncated manifest");

  std::istringstream ms(manifest);
  std::string line;
  if (!std::getline(ms, line) || line != "format wildsam-checkpoint 1")
    throw FormatError("checkpoint: unrecognized format line");
  std::string word;
  size_t cfg_len = 0;
  {
    std::getline(ms, line);
    std::istringstream ls(line);
    if (!(ls >> word >> cfg_len) || word != "config")
      throw FormatError("checkpoint: missing config block");
  }
  std::string cfg_text(cfg_len, '\0');
  ms.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!ms) throw FormatError("checkpoint: truncated config block");

  LoadedCheckpoint out;
  out.config = parse_config(cfg_text);
  out.model = std::make_unique<WildSamModel>(out.config.model,
                                             out.config.seed);

  size_t n_tensors = 0;
  {
    std::getline(ms, line);  // consume newline after config text
    if (line.empty()) std::getline(ms, line);
    std::istringstream ls(line);
    if (!(ls >> word >> n_tensors) || word != "tensors")
      throw FormatError("checkpoint: missing tensor table");
  }

  auto& params = out.model->params().all();
  if (params.size() != n_tensors)
    throw FormatError("checkpoint: tensor count " + std::to_string(n_tensors) +
                      " does not match rebuilt model (" +
                      std::to_string(params.size()) + ")");
  const std::streampos payload_base = in.tellg();
  for (size_t t = 0; t < n_tensors; ++t) {
    if (!std::getline(ms, line))
      throw FormatError("checkpoint: truncated tensor table");
    std::istringstream ls(line);
    std::string name, dtype, shape_s;
    uint64_t offset = 0;
    int trainable = 0;
    if (!(ls >> name >> dtype >> shape_s >> offset >> trainable))
      throw FormatError("checkpoint: bad tensor line: " + line);
    if (dtype != "f32")
      throw FormatError("checkpoint: unsupported dtype " + dtype);
    auto& p = params[t];
    if (p.name != name)
      throw FormatError("checkpoint: tensor '" + name +
                        "' does not match model parameter '" + p.name + "'");
    Shape shape;
    {
      std::stringstream ss(shape_s);
      std::string d;
      while (std::getline(ss, d, 'x')) shape.push_back(std::stoi(d));
    }
    if (shape != p.value.shape())
      throw FormatError("checkpoint: shape mismatch for '" + name + "'");
    if ((p.trainable ? 1 : 0) != trainable)
      throw FormatError("checkpoint: trainable flag mismatch for '" + name +
                        "'");
    in.seekg(payload_base + static_cast<std::streamoff>(offset));
    std::vector<float> buf(static_cast<size_t>(p.value.size()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * 4));
    if (!in)
      throw FormatError("checkpoint: truncated payload for '" + name + "'");
    for (size_t i = 0; i < buf.size(); ++i)
      p.value.data()[i] = static_cast<double>(buf[i]);
  }
  return out;
}

}  // namespace wildsam

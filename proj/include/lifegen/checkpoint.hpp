#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lifegen/cvae.hpp"
#include "lifegen/errors.hpp"

namespace lifegen {

// On-disk snapshot of a model plus the sorted class ids it has learned.
//
// Layout: magic "LGLVKR01" | u64 little-endian manifest byte length |
// UTF-8 JSON manifest (config, labels, per-parameter name/shape/offset) |
// little-endian float32 parameter arrays, tightly packed in manifest order.
struct Checkpoint {
  CvaeConfig config;
  std::vector<int> labels;  // sorted ascending
  int task_index = 0;
  std::vector<std::pair<std::string, std::vector<float>>> params;
  std::vector<std::pair<std::string, Shape>> shapes;
};

namespace detail {
constexpr char kCkptMagic[8] = {'L', 'G', 'L', 'V', 'K', 'R', '0', '1'};

inline nlohmann::json config_to_json(const CvaeConfig& c) {
  return {{"image_dim", c.image_dim},       {"latent_dim", c.latent_dim},
          {"num_classes", c.num_classes},   {"label_embed", c.label_embed},
          {"enc_hidden", c.enc_hidden},     {"dec_hidden", c.dec_hidden},
          {"both_label_paths", c.both_label_paths}};
}

inline CvaeConfig config_from_json(const nlohmann::json& j) {
  CvaeConfig c;
  c.image_dim = j.at("image_dim").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.label_embed = j.at("label_embed").get<int>();
  c.enc_hidden = j.at("enc_hidden").get<int>();
  c.dec_hidden = j.at("dec_hidden").get<int>();
  c.both_label_paths = j.at("both_label_paths").get<bool>();
  return c;
}
}  // namespace detail

inline Checkpoint make_checkpoint(const CvaeModel& model,
                                  std::vector<int> labels) {
  Checkpoint ck;
  ck.config = model.config();
  std::sort(labels.begin(), labels.end());
  ck.labels = std::move(labels);
  for (const auto& [name, t] : model.named_params()) {
    ck.params.emplace_back(name, t.data());
    ck.shapes.emplace_back(name, t.shape());
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json manifest;
  manifest["config"] = detail::config_to_json(ck.config);
  manifest["labels"] = ck.labels;
  manifest["task"] = ck.task_index;
  nlohmann::json plist = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const auto& [name, data] = ck.params[i];
    plist.push_back({{"name", name},
                     {"shape", ck.shapes[i].second},
                     {"offset", offset}});
    offset += data.size() * sizeof(float);
  }
  manifest["params"] = plist;
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(detail::kCkptMagic, 8);
  const std::uint64_t len = text.size();
  unsigned char lb[8];
  for (int i = 0; i < 8; ++i)
    lb[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(lb), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, data] : ck.params) {
    static_assert(sizeof(float) == 4);
    // assumes a little-endian host, as does load_checkpoint
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw BadCheckpoint(path + ": bad magic");
  unsigned char lb[8];
  if (!in.read(reinterpret_cast<char*>(lb), 8))
    throw BadCheckpoint(path + ": truncated header");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t(lb[i]) << (8 * i);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len)))
    throw BadCheckpoint(path + ": truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw BadCheckpoint(path + ": manifest is not valid JSON (" + e.what() +
                        ")");
  }
  Checkpoint ck;
  try {
    ck.config = detail::config_from_json(manifest.at("config"));
    ck.labels = manifest.at("labels").get<std::vector<int>>();
    ck.task_index = manifest.value("task", 0);
    for (const auto& p : manifest.at("params")) {
      const std::string name = p.at("name").get<std::string>();
      const Shape shape = p.at("shape").get<Shape>();
      std::vector<float> data(
          static_cast<std::size_t>(shape_numel(shape)));
      if (!in.read(reinterpret_cast<char*>(data.data()),
                   static_cast<std::streamsize>(data.size() * sizeof(float))))
        throw BadCheckpoint(path + ": truncated parameter " + name);
      ck.params.emplace_back(name, std::move(data));
      ck.shapes.emplace_back(name, shape);
    }
  } catch (const nlohmann::json::exception& e) {
    throw BadCheckpoint(path + ": malformed manifest (" + e.what() + ")");
  }
  return ck;
}

// Rebuilds a model from a checkpoint (fresh RNG only seeds the throwaway
// init, which load_params then overwrites).
inline CvaeModel model_from_checkpoint(const Checkpoint& ck) {
  Rng rng(0);
  CvaeModel m(ck.config, rng);
  m.load_params(ck.params);
  return m;
}

}  // namespace lifegen

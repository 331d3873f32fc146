#include "hifi/net/model.hpp"

#include <sstream>

namespace hifi::net {

namespace {

template <typename E>
E parse_enum(const std::string& v, std::initializer_list<std::pair<const char*, E>> table,
             const char* what) {
  for (const auto& [name, val] : table)
    if (v == name) return val;
  throw ConfigError(std::string("bad ") + what + ": " + v);
}

}  // namespace

const char* to_string(LfeMode m) {
  switch (m) {
    case LfeMode::kOff: return "off";
    case LfeMode::kGaussian: return "gaussian";
    case LfeMode::kLaplacian: return "laplacian";
  }
  return "?";
}
const char* to_string(UpMode m) {
  return m == UpMode::kBilinear ? "bilinear" : "ca";
}
const char* to_string(DownMode m) {
  return m == DownMode::kStridedConv ? "strided" : "ca";
}
const char* to_string(HeadMode m) {
  return m == HeadMode::kOriginal ? "original" : "recombination";
}

void ModelConfig::validate() const {
  if (levels < 3) throw ConfigError("model: need at least 3 levels for the neck");
  if (static_cast<int>(channels.size()) != levels)
    throw ConfigError("model: channels list must have one entry per level");
  if (img_size % (1 << levels) != 0)
    throw ConfigError("model: img_size must be divisible by 2^levels");
  if (head_kernel % 2 == 0) throw ConfigError("model: head_kernel must be odd");
  if (groups < 1) throw ConfigError("model: groups must be >= 1");
  if (attn_window < 0 || (attn_window > 0 && attn_window % 2 == 0))
    throw ConfigError("model: attn_window must be 0 or odd");
  for (int l = levels - 3; l < levels; ++l)
    if (channels[static_cast<std::size_t>(l)] % groups != 0)
      throw ConfigError("model: neck channels must be divisible by groups");
  if (num_classes < 1 || anchors_per_scale < 1)
    throw ConfigError("model: bad class/anchor counts");
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.img_size = 160;
  c.levels = 3;
  c.channels = {8, 16, 32};
  c.num_classes = 3;
  return c;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;  // defaults are the paper-scale settings
  return c;
}

ModelConfig ModelConfig::from_kv(const KvMap& kv) {
  ModelConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("img_size")) c.img_size = std::stoi(*v);
  if (auto* v = get("levels")) c.levels = std::stoi(*v);
  if (auto* v = get("channels")) {
    c.channels.clear();
    for (const auto& part : split(*v, ','))
      if (!trim(part).empty()) c.channels.push_back(std::stoi(trim(part)));
  }
  if (auto* v = get("groups")) c.groups = std::stoi(*v);
  if (auto* v = get("head_kernel")) c.head_kernel = std::stoi(*v);
  if (auto* v = get("lfe_mode"))
    c.lfe_mode = parse_enum<LfeMode>(*v,
                                     {{"off", LfeMode::kOff},
                                      {"gaussian", LfeMode::kGaussian},
                                      {"laplacian", LfeMode::kLaplacian}},
                                     "lfe_mode");
  if (auto* v = get("resample_up"))
    c.resample_up = parse_enum<UpMode>(
        *v, {{"bilinear", UpMode::kBilinear}, {"ca", UpMode::kCa}}, "resample_up");
  if (auto* v = get("resample_down"))
    c.resample_down = parse_enum<DownMode>(
        *v, {{"strided", DownMode::kStridedConv}, {"ca", DownMode::kCa}}, "resample_down");
  if (auto* v = get("head_mode"))
    c.head_mode = parse_enum<HeadMode>(
        *v, {{"original", HeadMode::kOriginal}, {"recombination", HeadMode::kRecombination}},
        "head_mode");
  if (auto* v = get("num_classes")) c.num_classes = std::stoi(*v);
  if (auto* v = get("anchors_per_scale")) c.anchors_per_scale = std::stoi(*v);
  if (auto* v = get("offset_scale")) c.offset_scale = std::stod(*v);
  if (auto* v = get("attn_window")) c.attn_window = std::stoi(*v);
  if (auto* v = get("model_seed")) c.seed = std::stoull(*v);
  return c;
}

KvMap ModelConfig::to_kv() const {
  KvMap kv;
  kv["img_size"] = std::to_string(img_size);
  kv["levels"] = std::to_string(levels);
  std::string ch;
  for (std::size_t i = 0; i < channels.size(); ++i)
    ch += (i ? "," : "") + std::to_string(channels[i]);
  kv["channels"] = ch;
  kv["groups"] = std::to_string(groups);
  kv["head_kernel"] = std::to_string(head_kernel);
  kv["lfe_mode"] = to_string(lfe_mode);
  kv["resample_up"] = to_string(resample_up);
  kv["resample_down"] = to_string(resample_down);
  kv["head_mode"] = to_string(head_mode);
  kv["num_classes"] = std::to_string(num_classes);
  kv["anchors_per_scale"] = std::to_string(anchors_per_scale);
  kv["offset_scale"] = std::to_string(offset_scale);
  kv["attn_window"] = std::to_string(attn_window);
  kv["model_seed"] = std::to_string(seed);
  return kv;
}

std::string ModelConfig::summary() const {
  std::ostringstream os;
  os << "model: img=" << img_size << " L=" << levels << " ch=";
  for (std::size_t i = 0; i < channels.size(); ++i) os << (i ? "," : "") << channels[i];
  os << " g=" << groups << " head_k=" << head_kernel << " lfe=" << to_string(lfe_mode)
     << " up=" << to_string(resample_up) << " down=" << to_string(resample_down)
     << " head=" << to_string(head_mode) << " nc=" << num_classes
     << " anchors=" << anchors_per_scale << " attn_window=" << attn_window;
  return os.str();
}

std::vector<det::GridSpec> output_grids(const ModelConfig& cfg) {
  std::vector<det::GridSpec> grids;
  for (int s = cfg.levels - 2; s <= cfg.levels; ++s) {
    int size = cfg.img_size / (1 << s);
    grids.push_back({size, size});
  }
  return grids;
}

}  // namespace hifi::net

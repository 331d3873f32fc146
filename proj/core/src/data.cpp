#include "hifi/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>

namespace hifi::data {

namespace fs = std::filesystem;

namespace {

std::string scene_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%05d", i);
  return buf;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw IoError("manifest: unknown split " + s);
}

}  // namespace

std::vector<const SceneEntry*> Manifest::split_entries(Split s) const {
  std::vector<const SceneEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

Manifest generate_dataset(const DatasetConfig& cfg) {
  if (cfg.n_scenes <= 0) throw ConfigError("generate: n_scenes must be positive");
  if (cfg.img_size < 16 || cfg.img_size % 8 != 0)
    throw ConfigError("generate: img_size must be a multiple of 8 and >= 16");
  if (cfg.snr_grid.empty()) throw ConfigError("generate: empty snr grid");
  double split_sum = 0;
  for (double s : cfg.split) split_sum += s;
  if (cfg.split.size() != 3 || std::abs(split_sum - 1.0) > 1e-9)
    throw ConfigError("generate: split ratios must be three values summing to 1");

  fs::path root(cfg.out_dir);
  if (fs::exists(root) && !fs::is_empty(root) && !cfg.overwrite)
    throw ConfigError("generate: output directory not empty (pass overwrite=1): " +
                      cfg.out_dir);
  fs::create_directories(root / "iq");
  fs::create_directories(root / "meta");
  fs::create_directories(root / "labels");
  fs::create_directories(root / "spectrograms");

  Manifest m;
  m.dir = cfg.out_dir;
  m.n_scenes = cfg.n_scenes;
  m.img_size = cfg.img_size;
  m.f_s = cfg.f_s;
  m.n_samples = cfg.n_samples();
  m.schemes = cfg.schemes.empty() ? sig::all_schemes() : cfg.schemes;
  m.snr_grid = cfg.snr_grid;
  m.seed = cfg.seed;

  // local class index by canonical scheme id
  std::vector<int> class_of_scheme(sig::kNumSchemes, -1);
  for (std::size_t i = 0; i < m.schemes.size(); ++i)
    class_of_scheme[static_cast<std::size_t>(sig::scheme_class_id(m.schemes[i]))] =
        static_cast<int>(i);

  m.entries.resize(static_cast<std::size_t>(cfg.n_scenes));
  for (int i = 0; i < cfg.n_scenes; ++i) {
    auto& e = m.entries[static_cast<std::size_t>(i)];
    e.id = scene_id(i);
    e.snr_db = cfg.snr_grid[static_cast<std::size_t>(i) % cfg.snr_grid.size()];
    e.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
  }

  // stratified split: within each SNR stratum, shuffle then cut 6:2:2
  {
    Rng rng(derive_seed(cfg.seed, 0x5917));
    std::map<long, std::vector<int>> strata;
    for (int i = 0; i < cfg.n_scenes; ++i)
      strata[static_cast<long>(std::llround(m.entries[static_cast<std::size_t>(i)].snr_db *
                                            100))]
          .push_back(i);
    for (auto& [key, idxs] : strata) {
      (void)key;
      // Fisher-Yates with our deterministic stream
      for (std::size_t j = idxs.size(); j > 1; --j) {
        std::size_t k = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(j) - 1));
        std::swap(idxs[j - 1], idxs[k]);
      }
      std::size_t n = idxs.size();
      std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.split[1] * n));
      std::size_t n_test = static_cast<std::size_t>(std::llround(cfg.split[2] * n));
      while (n_val + n_test >= n && n_val + n_test > 0) (n_val > n_test ? n_val : n_test) -= 1;
      for (std::size_t j = 0; j < n; ++j) {
        Split sp = Split::kTrain;
        if (j < n_val)
          sp = Split::kVal;
        else if (j < n_val + n_test)
          sp = Split::kTest;
        m.entries[static_cast<std::size_t>(idxs[j])].split = sp;
      }
    }
  }

  int workers = std::max(1, cfg.workers);
  parallel_for(static_cast<std::size_t>(cfg.n_scenes), workers, [&](std::size_t i) {
    const auto& e = m.entries[i];
    sig::SceneSpec spec;
    spec.n_signals_min = cfg.n_signals_min;
    spec.n_signals_max = cfg.n_signals_max;
    spec.max_overlap = cfg.max_overlap;
    spec.n_samples = cfg.n_samples();
    spec.f_s = cfg.f_s;
    spec.rng_seed = e.seed;
    spec.schemes = m.schemes;
    sig::ChannelConfig ch;
    ch.k_factor = cfg.k_factor;
    ch.snr_db = e.snr_db;
    auto rec = sig::compose_scene(spec, ch);

    sig::write_iq_file(m.iq_path(e.id), rec);
    sig::write_meta_file(m.meta_path(e.id), rec, e.seed);

    auto boxes = sig::ground_truth_boxes(rec, cfg.img_size, cfg.img_size);
    for (auto& b : boxes) {
      int local = class_of_scheme[static_cast<std::size_t>(b.class_id)];
      if (local < 0) throw DiagnosticError("generate: scene contains unlisted scheme");
      b.class_id = local;
    }
    sig::write_annotation_file(m.label_path(e.id), boxes);

    auto spec_mat = tfr::stft(rec, cfg.img_size, cfg.img_size / 2, tfr::WindowKind::kHann);
    auto norm = tfr::log_normalize(spec_mat);
    tfr::write_spectrogram(m.spec_path(e.id), tfr::to_f32(norm.values));
  });

  save_manifest(m);
  return m;
}

void save_manifest(const Manifest& m) {
  std::ostringstream os;
  os.precision(9);
  os << "n_scenes=" << m.n_scenes << "\n";
  os << "img_size=" << m.img_size << "\n";
  os << "f_s=" << m.f_s << "\n";
  os << "n_samples=" << m.n_samples << "\n";
  std::string names;
  for (std::size_t i = 0; i < m.schemes.size(); ++i)
    names += std::string(i ? "," : "") + sig::scheme_name(m.schemes[i]);
  os << "schemes=" << names << "\n";
  std::string grid;
  for (std::size_t i = 0; i < m.snr_grid.size(); ++i) {
    std::ostringstream g;
    g.precision(9);
    g << m.snr_grid[i];
    grid += std::string(i ? "," : "") + g.str();
  }
  os << "snr_grid=" << grid << "\n";
  os << "seed=" << m.seed << "\n";
  for (const auto& e : m.entries)
    os << "scene " << e.id << " " << split_name(e.split) << " " << e.snr_db << " " << e.seed
       << "\n";
  write_file_text(m.dir + "/manifest.txt", os.str());
}

Manifest load_manifest(const std::string& dir) {
  std::string text = read_file_text(dir + "/manifest.txt");
  Manifest m;
  m.dir = dir;
  std::istringstream in(text);
  std::string line;
  KvMap kv;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("scene ", 0) == 0) {
      std::istringstream ls(line.substr(6));
      SceneEntry e;
      std::string split_str;
      ls >> e.id >> split_str >> e.snr_db >> e.seed;
      if (!ls) throw IoError("manifest: bad scene line: " + line);
      e.split = split_from_name(split_str);
      m.entries.push_back(e);
    } else {
      auto eq = line.find('=');
      if (eq == std::string::npos) throw IoError("manifest: bad line: " + line);
      kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
  }
  m.n_scenes = std::stoi(kv.at("n_scenes"));
  m.img_size = std::stoi(kv.at("img_size"));
  m.f_s = std::stod(kv.at("f_s"));
  m.n_samples = std::stoi(kv.at("n_samples"));
  for (const auto& name : split(kv.at("schemes"), ','))
    m.schemes.push_back(sig::scheme_from_name(trim(name)));
  for (const auto& v : split(kv.at("snr_grid"), ',')) m.snr_grid.push_back(std::stod(trim(v)));
  m.seed = std::stoull(kv.at("seed"));
  if (static_cast<int>(m.entries.size()) != m.n_scenes)
    throw IoError("manifest: entry count mismatch");
  return m;
}

LoadedScene load_scene(const Manifest& m, const SceneEntry& entry) {
  LoadedScene s;
  s.spec = tfr::read_spectrogram(m.spec_path(entry.id));
  s.boxes = sig::read_annotation_file(m.label_path(entry.id));
  s.snr_db = entry.snr_db;
  return s;
}

}  // namespace hifi::data

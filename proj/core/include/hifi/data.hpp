#pragma once

#include <string>
#include <vector>

#include "hifi/sigsynth.hpp"
#include "hifi/tfr.hpp"

namespace hifi::data {

/// Dataset generation settings. Spectrogram geometry is tied to img_size:
/// n_fft = img_size, hop = img_size/2, n_samples = img_size * hop.
struct DatasetConfig {
  std::string out_dir;
  int n_scenes = 600;
  int img_size = 160;
  double f_s = 200000.0;
  double k_factor = 4.0;
  double max_overlap = 0.4;
  int n_signals_min = 3;
  int n_signals_max = 5;
  std::vector<sig::ModScheme> schemes;      // empty = all 14
  std::vector<double> snr_grid = {5.0, 7.5, 10.0};
  std::vector<double> split = {0.6, 0.2, 0.2};
  std::uint64_t seed = 42;
  bool overwrite = false;
  int workers = 1;

  int n_samples() const { return img_size * (img_size / 2); }
};

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };

struct SceneEntry {
  std::string id;
  Split split = Split::kTrain;
  double snr_db = 0;
  std::uint64_t seed = 0;
};

struct Manifest {
  std::string dir;
  int n_scenes = 0;
  int img_size = 0;
  double f_s = 0;
  int n_samples = 0;
  std::vector<sig::ModScheme> schemes;
  std::vector<double> snr_grid;
  std::uint64_t seed = 0;
  std::vector<SceneEntry> entries;

  std::string iq_path(const std::string& id) const { return dir + "/iq/" + id + ".iq"; }
  std::string meta_path(const std::string& id) const { return dir + "/meta/" + id + ".meta"; }
  std::string label_path(const std::string& id) const {
    return dir + "/labels/" + id + ".txt";
  }
  std::string spec_path(const std::string& id) const {
    return dir + "/spectrograms/" + id + ".spec";
  }
  std::vector<const SceneEntry*> split_entries(Split s) const;
  int num_classes() const { return static_cast<int>(schemes.size()); }
};

/// Generates scenes, spectrograms, labels, metadata and the manifest with a
/// stratified train/val/test split. Deterministic in cfg.seed. Refuses a
/// non-empty out_dir unless cfg.overwrite is set.
Manifest generate_dataset(const DatasetConfig& cfg);

Manifest load_manifest(const std::string& dir);
void save_manifest(const Manifest& m);

struct LoadedScene {
  tfr::Matf spec;                   // [N_t, N_f]
  std::vector<sig::GtBox> boxes;    // class ids are local (manifest order)
  double snr_db = 0;
};

LoadedScene load_scene(const Manifest& m, const SceneEntry& entry);

}  // namespace hifi::data

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hifi/common.hpp"
#include "hifi/detect.hpp"

namespace hifi::net {

enum class LfeMode { kOff, kGaussian, kLaplacian };
enum class UpMode { kBilinear, kCa };
enum class DownMode { kStridedConv, kCa };
enum class HeadMode { kOriginal, kRecombination };

/// Network hyperparameters. `channels` lists C_1..C_L for the backbone
/// stages (the input is single-channel, C_0 = 1). The neck runs on the last
/// three stages.
struct ModelConfig {
  int img_size = 640;
  int levels = 5;
  std::vector<int> channels = {32, 64, 128, 256, 256};
  int groups = 4;
  int head_kernel = 1;
  LfeMode lfe_mode = LfeMode::kGaussian;
  UpMode resample_up = UpMode::kCa;
  DownMode resample_down = DownMode::kCa;
  HeadMode head_mode = HeadMode::kRecombination;
  int num_classes = 14;
  int anchors_per_scale = 3;
  double offset_scale = 0.25;  // attention offsets, in input-pixel units
  int attn_window = 9;         // odd window side; 0 = full attention
  std::uint64_t seed = 0;

  void validate() const;
  static ModelConfig from_kv(const KvMap& kv);
  KvMap to_kv() const;
  std::string summary() const;

  /// 160x160, L=3, channel plan scaled 4x down, 3 classes.
  static ModelConfig desk();
  /// 640x640, L=5, full channel plan, 14 classes.
  static ModelConfig paper();
};

const char* to_string(LfeMode m);
const char* to_string(UpMode m);
const char* to_string(DownMode m);
const char* to_string(HeadMode m);

/// Prediction grid sizes (finest first) for the three neck scales.
std::vector<det::GridSpec> output_grids(const ModelConfig& cfg);

}  // namespace hifi::net

#pragma once

#include <iosfwd>
#include <optional>

#include "hifi/data.hpp"
#include "hifi/detect_loss.hpp"
#include "hifi/evalkit.hpp"
#include "hifi/net/model.hpp"

namespace hifi::train {

enum class LrSchedule { kConstant, kWarmupCosine };

struct TrainConfig {
  std::string data_dir;
  std::string run_dir;
  net::ModelConfig model;
  int epochs = 30;
  int batch_size = 32;
  double lr = 0.002;
  double weight_decay = 0.01;
  LrSchedule lr_schedule = LrSchedule::kWarmupCosine;
  det::LossWeights loss;
  double eval_conf = 0.001;  // decode floor during validation
  double nms_iou = 0.45;
  std::uint64_t seed = 0;
  int workers = 1;
  bool overfit_one = false;
  int overfit_steps = 300;
  std::string resume;  // path to a last.ckpt to continue from
};

struct EpochLog {
  int epoch = 0;
  double loss = 0, box = 0, obj = 0, cls = 0;
  double val_map50 = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochLog> logs;
  std::string best_ckpt, last_ckpt;
  double best_map50 = 0;
  double first_loss = 0, final_loss = 0;  // overfit-mode trace
};

/// Trains on the manifest's train split, evaluates mAP50 on val each epoch,
/// saves best/last checkpoints (parameters, optimizer state, anchors,
/// counters) under cfg.run_dir. Deterministic for a fixed config.
TrainResult train(const TrainConfig& cfg, std::ostream& log);

/// Runs the model from a checkpoint over one split and returns detections
/// plus ground truth per scene (inputs to evalkit / infer outputs).
struct SplitRun {
  std::vector<eval::EvalScene> scenes;
  std::vector<std::string> ids;
};
SplitRun run_split(const std::string& ckpt_path, const data::Manifest& manifest,
                   data::Split split, double conf_thresh, double nms_iou, int workers,
                   int max_det = 300);

/// Checkpoint payload helpers shared by train/eval/infer.
struct Checkpoint {
  net::ModelConfig model_cfg;
  std::vector<std::vector<det::Anchor>> anchors;  // per scale
  std::map<std::string, nn::Tensor<float>> tensors;
  int epoch = 0;
  long adam_step = 0;
  double best_map50 = 0;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hifi::train

#include "hifi/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace hifi::train {

namespace fs = std::filesystem;
using nn::Tensor32;

namespace {

struct CachedScene {
  Tensor32 input;
  std::vector<Tensor32> pyramid;
  std::vector<std::pair<int, det::Box>> gts;
  double snr_db = 0;
};

CachedScene cache_scene(const data::Manifest& m, const data::SceneEntry& e,
                        const net::ModelConfig& cfg) {
  auto loaded = data::load_scene(m, e);
  CachedScene c;
  c.input = net::image_from_spectrogram<float>(loaded.spec);
  c.pyramid = net::pyramid_from_image<float>(c.input, cfg.lfe_mode, cfg.levels);
  for (const auto& b : loaded.boxes)
    c.gts.emplace_back(b.class_id, det::Box{b.cx, b.cy, b.w, b.h});
  c.snr_db = loaded.snr_db;
  return c;
}

std::vector<std::vector<det::Anchor>> fit_scale_anchors(
    const std::vector<CachedScene>& scenes, const net::ModelConfig& cfg,
    std::uint64_t seed) {
  std::vector<det::Box> boxes;
  for (const auto& s : scenes)
    for (const auto& [cls, b] : s.gts) {
      (void)cls;
      boxes.push_back(b);
    }
  int total = cfg.anchors_per_scale * 3;
  auto flat = det::fit_anchors(boxes, total, seed);
  std::vector<std::vector<det::Anchor>> per_scale;
  for (int s = 0; s < 3; ++s)
    per_scale.emplace_back(flat.begin() + s * cfg.anchors_per_scale,
                           flat.begin() + (s + 1) * cfg.anchors_per_scale);
  return per_scale;
}

std::string anchors_to_string(const std::vector<std::vector<det::Anchor>>& a) {
  std::ostringstream os;
  os.precision(9);
  for (std::size_t s = 0; s < a.size(); ++s)
    for (const auto& an : a[s]) os << (os.tellp() > 0 ? "," : "") << an.w << "," << an.h;
  return os.str();
}

/// Checkpoint format: model tensors plus bookkeeping tensors
/// (_anchors [scales*per*2], _meta [epoch, adam_step, best_map50], opt.m.*,
/// opt.v.*) and a `_config` blob holding the model kv text as float bytes is
/// avoided -- config is stored in a sidecar kv section encoded in tensor
/// names instead; simplest robust route: a sibling .cfg file.
void save_checkpoint(const std::string& path, net::Model<float>& model,
                     nn::AdamW<float>* opt,
                     const std::vector<std::vector<det::Anchor>>& anchors, int epoch,
                     double best_map50) {
  std::vector<Tensor32> out = model.parameters();
  std::vector<float> aflat;
  for (const auto& scale : anchors)
    for (const auto& an : scale) {
      aflat.push_back(static_cast<float>(an.w));
      aflat.push_back(static_cast<float>(an.h));
    }
  auto at = Tensor32::from({static_cast<int>(aflat.size())}, aflat);
  at.set_name("_anchors");
  out.push_back(at);
  auto meta = Tensor32::from({3}, {static_cast<float>(epoch),
                                   static_cast<float>(opt ? opt->step_count() : 0),
                                   static_cast<float>(best_map50)});
  meta.set_name("_meta");
  out.push_back(meta);
  if (opt) {
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto m1 = Tensor32::from(params[i].shape(), opt->moment1(i));
      m1.set_name("opt.m." + params[i].name());
      out.push_back(m1);
      auto m2 = Tensor32::from(params[i].shape(), opt->moment2(i));
      m2.set_name("opt.v." + params[i].name());
      out.push_back(m2);
    }
  }
  nn::save_tensors<float>(path, out);
  // model config sidecar so eval/infer can rebuild the same architecture
  KvMap kv = model.config().to_kv();
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
  write_file_text(path + ".cfg", os.str());
}

double schedule_lr(const TrainConfig& cfg, int epoch, int step_in_epoch, int steps_per_epoch) {
  if (cfg.lr_schedule == LrSchedule::kConstant) return cfg.lr;
  // 3-epoch linear warmup from lr/10, then cosine to lr/10
  double warmup_epochs = std::min(3.0, cfg.epochs / 4.0);
  double t = epoch + (steps_per_epoch > 0
                          ? static_cast<double>(step_in_epoch) / steps_per_epoch
                          : 0.0);
  if (warmup_epochs > 0 && t < warmup_epochs)
    return cfg.lr * (0.1 + 0.9 * t / warmup_epochs);
  double progress = (t - warmup_epochs) / std::max(1e-9, cfg.epochs - warmup_epochs);
  progress = std::min(1.0, std::max(0.0, progress));
  return cfg.lr * (0.1 + 0.45 * (1.0 + std::cos(M_PI * progress)));
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint ck;
  ck.tensors = nn::load_tensors<float>(path);
  ck.model_cfg = net::ModelConfig::from_kv(load_kv_file(path + ".cfg"));
  auto at = ck.tensors.find("_anchors");
  if (at == ck.tensors.end()) throw IoError("checkpoint missing _anchors: " + path);
  const auto& av = at->second.values();
  int per = ck.model_cfg.anchors_per_scale;
  if (static_cast<int>(av.size()) != 3 * per * 2)
    throw IoError("checkpoint anchor payload mismatch");
  for (int s = 0; s < 3; ++s) {
    std::vector<det::Anchor> scale;
    for (int a = 0; a < per; ++a)
      scale.push_back({av[static_cast<std::size_t>((s * per + a) * 2)],
                       av[static_cast<std::size_t>((s * per + a) * 2 + 1)]});
    ck.anchors.push_back(scale);
  }
  auto mt = ck.tensors.find("_meta");
  if (mt != ck.tensors.end() && mt->second.numel() == 3) {
    ck.epoch = static_cast<int>(mt->second.values()[0]);
    ck.adam_step = static_cast<long>(mt->second.values()[1]);
    ck.best_map50 = static_cast<double>(mt->second.values()[2]);
  }
  return ck;
}

TrainResult train(const TrainConfig& cfg_in, std::ostream& log) {
  TrainConfig cfg = cfg_in;
  if (cfg.overfit_one) cfg.lr_schedule = LrSchedule::kConstant;
  auto manifest = data::load_manifest(cfg.data_dir);
  net::ModelConfig mcfg = cfg.model;
  if (mcfg.img_size != manifest.img_size)
    throw ConfigError("train: model img_size does not match dataset");
  if (mcfg.num_classes != manifest.num_classes())
    throw ConfigError("train: model num_classes does not match dataset scheme list");
  mcfg.validate();

  fs::create_directories(cfg.run_dir);

  auto train_entries = manifest.split_entries(data::Split::kTrain);
  auto val_entries = manifest.split_entries(data::Split::kVal);
  if (train_entries.empty()) throw ConfigError("train: empty train split");
  if (cfg.overfit_one) {
    train_entries.resize(1);
    val_entries.clear();
  }

  log << "loading " << train_entries.size() << " train / " << val_entries.size()
      << " val scenes\n";
  std::vector<CachedScene> train_scenes(train_entries.size());
  std::vector<CachedScene> val_scenes(val_entries.size());
  parallel_for(train_entries.size(), cfg.workers, [&](std::size_t i) {
    train_scenes[i] = cache_scene(manifest, *train_entries[i], mcfg);
  });
  parallel_for(val_entries.size(), cfg.workers, [&](std::size_t i) {
    val_scenes[i] = cache_scene(manifest, *val_entries[i], mcfg);
  });

  auto grids = net::output_grids(mcfg);
  auto anchors = fit_scale_anchors(train_scenes, mcfg, derive_seed(cfg.seed, 0xA));

  // per-scene targets are model-independent; build once
  std::vector<det::Targets> train_targets(train_scenes.size());
  int warn_total = 0;
  for (std::size_t i = 0; i < train_scenes.size(); ++i) {
    train_targets[i] = det::assign_targets(train_scenes[i].gts, anchors, grids);
    warn_total += train_targets[i].warning_count();
  }
  if (warn_total > 0)
    log << "warning: " << warn_total << " gt boxes skipped by the assignment gates\n";

  net::Model<float> model(mcfg);
  nn::AdamW<float>::Options aopt;
  aopt.lr = static_cast<float>(cfg.lr);
  aopt.weight_decay = static_cast<float>(cfg.weight_decay);
  nn::AdamW<float> opt(model.parameters(), aopt);

  int start_epoch = 0;
  double best_map50 = 0;
  if (!cfg.resume.empty()) {
    auto ck = load_checkpoint(cfg.resume);
    model.load_state(ck.tensors);
    anchors = ck.anchors;
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto m1 = ck.tensors.find("opt.m." + params[i].name());
      auto m2 = ck.tensors.find("opt.v." + params[i].name());
      if (m1 == ck.tensors.end() || m2 == ck.tensors.end())
        throw IoError("resume checkpoint lacks optimizer state");
      opt.moment1(i) = m1->second.values();
      opt.moment2(i) = m2->second.values();
    }
    opt.set_step_count(ck.adam_step);
    start_epoch = ck.epoch;
    best_map50 = ck.best_map50;
    // targets depend on anchors; rebuild
    for (std::size_t i = 0; i < train_scenes.size(); ++i)
      train_targets[i] = det::assign_targets(train_scenes[i].gts, anchors, grids);
    log << "resumed from " << cfg.resume << " at epoch " << start_epoch << "\n";
  }

  // worker model replicas; gradients land in per-scene buffers and are
  // summed in scene order so results do not depend on the worker count
  int workers = std::max(1, cfg.workers);
  std::vector<std::unique_ptr<net::Model<float>>> replicas;
  for (int w = 0; w < workers; ++w)
    replicas.emplace_back(std::make_unique<net::Model<float>>(mcfg));

  auto sync_replicas = [&]() {
    for (auto& rep : replicas) {
      auto& dst = rep->parameters();
      const auto& src = model.parameters();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i].values() = src[i].values();
    }
  };

  TrainResult result;
  result.best_ckpt = cfg.run_dir + "/best.ckpt";
  result.last_ckpt = cfg.run_dir + "/last.ckpt";

  std::size_t n_params = model.parameters().size();
  long global_step = 0;
  bool first_loss_recorded = false;

  int total_epochs = cfg.overfit_one
                         ? (cfg.overfit_steps + static_cast<int>(train_scenes.size()) - 1)
                         : cfg.epochs;
  // overfit mode: one scene per "epoch", no shuffling, no eval
  int epochs_to_run = cfg.overfit_one ? cfg.overfit_steps : cfg.epochs;

  for (int epoch = start_epoch; epoch < epochs_to_run; ++epoch) {
    (void)total_epochs;
    std::vector<std::size_t> order(train_scenes.size());
    std::iota(order.begin(), order.end(), 0);
    if (!cfg.overfit_one) {
      Rng shuffle_rng(derive_seed(cfg.seed, 0xE000 + static_cast<std::uint64_t>(epoch)));
      for (std::size_t j = order.size(); j > 1; --j) {
        std::size_t k = static_cast<std::size_t>(
            shuffle_rng.uniform_int(0, static_cast<std::int64_t>(j) - 1));
        std::swap(order[j - 1], order[k]);
      }
    }

    double ep_loss = 0, ep_box = 0, ep_obj = 0, ep_cls = 0;
    int ep_batches = 0;
    int steps_per_epoch =
        static_cast<int>((order.size() + cfg.batch_size - 1) / cfg.batch_size);

    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      std::size_t bsz = b1 - b0;
      opt.set_lr(static_cast<float>(
          schedule_lr(cfg, epoch, ep_batches, steps_per_epoch)));
      sync_replicas();

      std::vector<std::vector<std::vector<float>>> grad_buf(bsz);
      std::vector<double> losses(bsz, 0), boxes(bsz, 0), objs(bsz, 0), clss(bsz, 0);
      std::vector<std::string> errors(bsz);

      std::atomic<int> rep_slot{0};
      std::vector<std::thread> pool;
      std::atomic<std::size_t> next{0};
      auto body = [&]() {
        int slot = rep_slot.fetch_add(1);
        auto& rep = *replicas[static_cast<std::size_t>(slot)];
        for (;;) {
          std::size_t j = next.fetch_add(1);
          if (j >= bsz) break;
          std::size_t scene_idx = order[b0 + j];
          try {
            const auto& scene = train_scenes[scene_idx];
            auto preds = rep.forward(scene.input, scene.pyramid);
            auto loss =
                det::detection_loss(preds, train_targets[scene_idx], anchors,
                                    mcfg.num_classes, cfg.loss);
            auto scaled = nn::mul_scalar(loss.total, 1.0f / static_cast<float>(bsz));
            for (auto& p : rep.parameters()) p.zero_grad();
            nn::backward(scaled);
            auto& buf = grad_buf[j];
            buf.resize(n_params);
            for (std::size_t pi = 0; pi < n_params; ++pi) {
              auto& p = rep.parameters()[pi];
              buf[pi] = p.has_grad() ? p.grad_values() : std::vector<float>(p.numel(), 0.f);
            }
            losses[j] = loss.total.item();
            boxes[j] = loss.box;
            objs[j] = loss.obj;
            clss[j] = loss.cls;
          } catch (const std::exception& ex) {
            errors[j] = ex.what();
          }
        }
      };
      std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(workers), bsz);
      for (std::size_t t = 0; t + 1 < nt; ++t) pool.emplace_back(body);
      body();
      for (auto& th : pool) th.join();
      for (std::size_t j = 0; j < bsz; ++j)
        if (!errors[j].empty())
          throw DiagnosticError("train: step " + std::to_string(global_step) + ": " +
                                errors[j]);

      // ordered reduction into the master gradients
      opt.zero_grad();
      for (std::size_t j = 0; j < bsz; ++j)
        for (std::size_t pi = 0; pi < n_params; ++pi) {
          float* g = model.parameters()[pi].grad();
          const auto& src = grad_buf[j][pi];
          for (std::size_t u = 0; u < src.size(); ++u) g[u] += src[u];
        }
      opt.step();
      ++global_step;
      ++ep_batches;

      double batch_loss = 0;
      for (std::size_t j = 0; j < bsz; ++j) batch_loss += losses[j];
      batch_loss /= static_cast<double>(bsz);
      if (!std::isfinite(batch_loss))
        throw DiagnosticError("train: non-finite loss at step " +
                              std::to_string(global_step - 1));
      if (!first_loss_recorded) {
        result.first_loss = batch_loss;
        first_loss_recorded = true;
      }
      result.final_loss = batch_loss;
      ep_loss += batch_loss;
      for (std::size_t j = 0; j < bsz; ++j) {
        ep_box += boxes[j] / static_cast<double>(bsz);
        ep_obj += objs[j] / static_cast<double>(bsz);
        ep_cls += clss[j] / static_cast<double>(bsz);
      }
    }

    EpochLog el;
    el.epoch = epoch + 1;
    el.loss = ep_loss / std::max(1, ep_batches);
    el.box = ep_box / std::max(1, ep_batches);
    el.obj = ep_obj / std::max(1, ep_batches);
    el.cls = ep_cls / std::max(1, ep_batches);
    el.lr = opt.lr();

    // validation mAP50
    if (!val_scenes.empty()) {
      sync_replicas();
      std::vector<eval::EvalScene> escenes(val_scenes.size());
      std::atomic<int> slot2{0};
      std::vector<std::thread> pool2;
      std::atomic<std::size_t> vnext{0};
      auto vbody = [&]() {
        int slot = slot2.fetch_add(1);
        auto& rep = *replicas[static_cast<std::size_t>(slot)];
        nn::NoGradGuard ng;
        for (;;) {
          std::size_t j = vnext.fetch_add(1);
          if (j >= val_scenes.size()) break;
          const auto& scene = val_scenes[j];
          auto preds = rep.forward(scene.input, scene.pyramid);
          auto dets = det::decode_and_nms(preds, anchors, mcfg.num_classes, cfg.eval_conf,
                                          cfg.nms_iou);
          escenes[j].dets = dets;
          escenes[j].gts = scene.gts;
          escenes[j].snr_db = scene.snr_db;
        }
      };
      std::size_t nv = std::min<std::size_t>(static_cast<std::size_t>(workers),
                                             val_scenes.size());
      for (std::size_t t = 0; t + 1 < nv; ++t) pool2.emplace_back(vbody);
      vbody();
      for (auto& th : pool2) th.join();
      auto rep_eval = eval::map_metrics(escenes, mcfg.num_classes);
      el.val_map50 = rep_eval.map_50 / 100.0;
    }

    bool verbose = !cfg.overfit_one || (epoch + 1) % 50 == 0 || epoch == 0;
    if (verbose) {
      log << "epoch " << el.epoch << " loss=" << el.loss << " box=" << el.box
          << " obj=" << el.obj << " cls=" << el.cls << " lr=" << el.lr;
      if (!val_scenes.empty()) log << " val_map50=" << el.val_map50;
      log << "\n";
      log.flush();
    }
    result.logs.push_back(el);

    bool last_pass = epoch + 1 == epochs_to_run;
    if (!cfg.overfit_one || last_pass) {
      save_checkpoint(result.last_ckpt, model, &opt, anchors, epoch + 1, best_map50);
      if (val_scenes.empty() || el.val_map50 >= best_map50) {
        best_map50 = el.val_map50;
        save_checkpoint(result.best_ckpt, model, &opt, anchors, epoch + 1, best_map50);
      }
    }
  }
  result.best_map50 = best_map50;
  if (cfg.overfit_one && result.logs.empty()) {
    // overfit mode with 0 steps requested; nothing to do
  }
  return result;
}

SplitRun run_split(const std::string& ckpt_path, const data::Manifest& manifest,
                   data::Split split, double conf_thresh, double nms_iou, int workers,
                   int max_det) {
  auto ck = load_checkpoint(ckpt_path);
  auto mcfg = ck.model_cfg;
  mcfg.validate();
  if (mcfg.img_size != manifest.img_size)
    throw ConfigError("run_split: checkpoint img_size does not match dataset");

  auto entries = manifest.split_entries(split);
  if (entries.empty()) throw ConfigError("run_split: empty split");

  int nworkers = std::max(1, workers);
  std::vector<std::unique_ptr<net::Model<float>>> replicas;
  for (int w = 0; w < nworkers; ++w) {
    replicas.emplace_back(std::make_unique<net::Model<float>>(mcfg));
    replicas.back()->load_state(ck.tensors);
  }

  SplitRun run;
  run.scenes.resize(entries.size());
  run.ids.resize(entries.size());
  std::atomic<int> slot{0};
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  auto body = [&]() {
    int s = slot.fetch_add(1);
    auto& rep = *replicas[static_cast<std::size_t>(s)];
    nn::NoGradGuard ng;
    for (;;) {
      std::size_t j = next.fetch_add(1);
      if (j >= entries.size()) break;
      auto scene = cache_scene(manifest, *entries[j], mcfg);
      auto preds = rep.forward(scene.input, scene.pyramid);
      run.scenes[j].dets = det::decode_and_nms(preds, ck.anchors, mcfg.num_classes,
                                               conf_thresh, nms_iou, max_det);
      run.scenes[j].gts = scene.gts;
      run.scenes[j].snr_db = scene.snr_db;
      run.ids[j] = entries[j]->id;
    }
  };
  std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(nworkers), entries.size());
  for (std::size_t t = 0; t + 1 < nt; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  return run;
}

}  // namespace hifi::train

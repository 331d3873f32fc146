#include "hifi/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "hifi/common.hpp"
#include "hifi/data.hpp"
#include "hifi/train.hpp"

namespace hifi::cli {

namespace fs = std::filesystem;

namespace {

KvMap preset_defaults(const std::string& preset) {
  KvMap kv;
  kv["preset"] = preset;
  if (preset == "desk") {
    kv["n_scenes"] = "600";
    kv["img_size"] = "160";
    kv["snr_grid"] = "5,7.5,10";
    kv["schemes"] = "BPSK,4FSK,AM-DSB";
    kv["levels"] = "3";
    kv["channels"] = "8,16,32";
    kv["num_classes"] = "3";
  } else if (preset == "paper") {
    kv["n_scenes"] = "36000";
    kv["img_size"] = "640";
    kv["snr_grid"] = "-10,-7.5,-5,-2.5,0,2.5,5,7.5,10";
    kv["schemes"] = "";  // all 14
    kv["levels"] = "5";
    kv["channels"] = "32,64,128,256,256";
    kv["num_classes"] = "14";
  } else {
    throw ConfigError("unknown preset: " + preset);
  }
  // shared defaults
  kv["f_s"] = "200000";
  kv["k_factor"] = "4";
  kv["max_overlap"] = "0.4";
  kv["n_signals_min"] = "3";
  kv["n_signals_max"] = "5";
  kv["split"] = "0.6,0.2,0.2";
  kv["seed"] = "42";
  kv["overwrite"] = "0";
  kv["epochs"] = "30";
  kv["batch_size"] = "32";
  kv["lr"] = "0.002";
  kv["weight_decay"] = "0.01";
  kv["lr_schedule"] = "cosine";
  kv["groups"] = "4";
  kv["head_kernel"] = "1";
  kv["lfe_mode"] = "gaussian";
  kv["resample_up"] = "ca";
  kv["resample_down"] = "ca";
  kv["head_mode"] = "recombination";
  kv["anchors_per_scale"] = "3";
  kv["offset_scale"] = "0.25";
  kv["attn_window"] = "9";
  kv["model_seed"] = "0";
  kv["conf_thresh"] = "0.25";
  kv["nms_iou"] = "0.45";
  kv["checkpoint"] = "best";
  kv["split_name"] = "test";
  kv["overfit"] = "0";
  kv["overfit_steps"] = "300";
  kv["resume"] = "";
  return kv;
}

struct CommonArgs {
  std::string preset = "desk";
  std::string config_path;
  std::vector<std::string> sets;
};

KvMap resolve_config(const CommonArgs& args) {
  KvMap kv = preset_defaults(args.preset);
  if (!args.config_path.empty()) {
    for (const auto& [k, v] : load_kv_file(args.config_path)) kv[k] = v;
  }
  for (const auto& s : args.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + s);
    kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  return kv;
}

void echo_config(const std::string& command, const KvMap& kv) {
  std::cout << "command: " << command << "\nresolved configuration:\n";
  for (const auto& [k, v] : kv) std::cout << "  " << k << "=" << v << "\n";
  std::cout.flush();
}

int parse_int(const KvMap& kv, const char* key) { return std::stoi(kv.at(key)); }
double parse_double(const KvMap& kv, const char* key) { return std::stod(kv.at(key)); }
bool parse_bool(const KvMap& kv, const char* key) {
  const auto& v = kv.at(key);
  return v == "1" || v == "true" || v == "yes";
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : split(s, ','))
    if (!trim(part).empty()) out.push_back(std::stod(trim(part)));
  return out;
}

int resolve_workers(const KvMap& kv) {
  auto it = kv.find("workers");
  if (it != kv.end() && !it->second.empty()) return std::max(1, std::stoi(it->second));
  return default_workers();
}

data::DatasetConfig dataset_config(const KvMap& kv, const std::string& out_dir) {
  data::DatasetConfig d;
  d.out_dir = out_dir;
  d.n_scenes = parse_int(kv, "n_scenes");
  d.img_size = parse_int(kv, "img_size");
  d.f_s = parse_double(kv, "f_s");
  d.k_factor = parse_double(kv, "k_factor");
  d.max_overlap = parse_double(kv, "max_overlap");
  d.n_signals_min = parse_int(kv, "n_signals_min");
  d.n_signals_max = parse_int(kv, "n_signals_max");
  for (const auto& name : split(kv.at("schemes"), ','))
    if (!trim(name).empty()) d.schemes.push_back(sig::scheme_from_name(trim(name)));
  d.snr_grid = parse_double_list(kv.at("snr_grid"));
  d.split = parse_double_list(kv.at("split"));
  d.seed = std::stoull(kv.at("seed"));
  d.overwrite = parse_bool(kv, "overwrite");
  d.workers = resolve_workers(kv);
  return d;
}

train::TrainConfig train_config(const KvMap& kv, const std::string& data_dir,
                                const std::string& run_dir) {
  train::TrainConfig t;
  t.data_dir = data_dir;
  t.run_dir = run_dir;
  t.model = net::ModelConfig::from_kv(kv);
  auto manifest = data::load_manifest(data_dir);
  t.model.img_size = manifest.img_size;
  t.model.num_classes = manifest.num_classes();
  t.epochs = parse_int(kv, "epochs");
  t.batch_size = parse_int(kv, "batch_size");
  t.lr = parse_double(kv, "lr");
  t.weight_decay = parse_double(kv, "weight_decay");
  t.lr_schedule = kv.at("lr_schedule") == "constant" ? train::LrSchedule::kConstant
                                                     : train::LrSchedule::kWarmupCosine;
  t.nms_iou = parse_double(kv, "nms_iou");
  t.seed = std::stoull(kv.at("seed"));
  t.workers = resolve_workers(kv);
  t.overfit_one = parse_bool(kv, "overfit");
  t.overfit_steps = parse_int(kv, "overfit_steps");
  t.resume = kv.at("resume");
  return t;
}

std::string checkpoint_path(const KvMap& kv, const std::string& run_dir) {
  const auto& which = kv.at("checkpoint");
  if (which == "best") return run_dir + "/best.ckpt";
  if (which == "last") return run_dir + "/last.ckpt";
  return which;  // explicit path
}

data::Split parse_split(const KvMap& kv) {
  const auto& s = kv.at("split_name");
  if (s == "train") return data::Split::kTrain;
  if (s == "val") return data::Split::kVal;
  if (s == "test") return data::Split::kTest;
  throw ConfigError("split_name must be train/val/test, got: " + s);
}

int cmd_generate(const CommonArgs& common, const std::string& out_dir) {
  auto kv = resolve_config(common);
  kv["out"] = out_dir;
  echo_config("generate", kv);
  auto cfg = dataset_config(kv, out_dir);
  auto manifest = data::generate_dataset(cfg);
  int n_train = 0, n_val = 0, n_test = 0;
  for (const auto& e : manifest.entries) {
    if (e.split == data::Split::kTrain) ++n_train;
    if (e.split == data::Split::kVal) ++n_val;
    if (e.split == data::Split::kTest) ++n_test;
  }
  std::cout << "wrote " << manifest.n_scenes << " scenes to " << out_dir << " (train "
            << n_train << " / val " << n_val << " / test " << n_test << ")\n";
  return 0;
}

int cmd_train(const CommonArgs& common, const std::string& data_dir,
              const std::string& run_dir) {
  auto kv = resolve_config(common);
  kv["data"] = data_dir;
  kv["run"] = run_dir;
  echo_config("train", kv);
  auto cfg = train_config(kv, data_dir, run_dir);
  std::cout << cfg.model.summary() << "\n";
  auto result = train::train(cfg, std::cout);
  if (cfg.overfit_one) {
    std::cout << "overfit trace: first=" << result.first_loss
              << " final=" << result.final_loss << " ratio="
              << (result.first_loss > 0 ? result.final_loss / result.first_loss : 0.0)
              << "\n";
  } else {
    std::cout << "best val mAP50 = " << result.best_map50 << " -> " << result.best_ckpt
              << "\n";
  }
  return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& data_dir,
             const std::string& run_dir) {
  auto kv = resolve_config(common);
  kv["data"] = data_dir;
  kv["run"] = run_dir;
  echo_config("eval", kv);
  auto manifest = data::load_manifest(data_dir);
  auto ckpt = checkpoint_path(kv, run_dir);
  if (!fs::exists(ckpt)) throw ConfigError("checkpoint not found: " + ckpt);
  // decode with a low confidence floor; the report searches the F1 point
  auto run = train::run_split(ckpt, manifest, parse_split(kv), 0.001,
                              parse_double(kv, "nms_iou"), resolve_workers(kv));
  auto report = eval::map_metrics(run.scenes, manifest.num_classes());
  std::cout << eval::report_table(report);
  write_file_text(run_dir + "/report.txt", eval::report_table(report));
  write_file_text(run_dir + "/report.kv", eval::report_kv(report));
  write_file_text(run_dir + "/per_snr.csv", eval::per_snr_csv(report));
  std::cout << "report written to " << run_dir << "/report.{txt,kv} and per_snr.csv\n";
  return 0;
}

void burn_box(tfr::Matf& spec, const det::Box& b) {
  int nt = spec.rows, nf = spec.cols;
  int t0 = std::max(0, static_cast<int>((b.cx - b.w / 2) * nt));
  int t1 = std::min(nt - 1, static_cast<int>((b.cx + b.w / 2) * nt));
  int f0 = std::max(0, static_cast<int>((b.cy - b.h / 2) * nf));
  int f1 = std::min(nf - 1, static_cast<int>((b.cy + b.h / 2) * nf));
  for (int t = t0; t <= t1; ++t) {
    spec.at(t, f0) = 1.0f;
    spec.at(t, f1) = 1.0f;
  }
  for (int f = f0; f <= f1; ++f) {
    spec.at(t0, f) = 1.0f;
    spec.at(t1, f) = 1.0f;
  }
}

int cmd_infer(const CommonArgs& common, const std::string& data_dir,
              const std::string& run_dir) {
  auto kv = resolve_config(common);
  kv["data"] = data_dir;
  kv["run"] = run_dir;
  echo_config("infer", kv);
  auto manifest = data::load_manifest(data_dir);
  auto ckpt = checkpoint_path(kv, run_dir);
  if (!fs::exists(ckpt)) throw ConfigError("checkpoint not found: " + ckpt);
  auto run = train::run_split(ckpt, manifest, parse_split(kv),
                              parse_double(kv, "conf_thresh"), parse_double(kv, "nms_iou"),
                              resolve_workers(kv));
  fs::create_directories(run_dir + "/infer");
  for (std::size_t i = 0; i < run.ids.size(); ++i) {
    const auto& id = run.ids[i];
    det::write_detections(run_dir + "/infer/" + id + ".txt", run.scenes[i].dets);
    auto spec = tfr::read_spectrogram(manifest.spec_path(id));
    for (const auto& d : run.scenes[i].dets) burn_box(spec, d.box);
    tfr::write_pgm(run_dir + "/infer/" + id + ".pgm", spec);
  }
  std::cout << "wrote detections and overlays for " << run.ids.size() << " scenes to "
            << run_dir << "/infer\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"multi-signal detection and modulation recognition pipeline"};
  app.require_subcommand(1);

  struct SubArgs {
    CommonArgs common;
    std::string out, data, run;
  };
  std::map<std::string, SubArgs> sub_args;

  auto add_common = [&](CLI::App* sub, const std::string& name) {
    auto& sa = sub_args[name];
    sub->add_option("--preset", sa.common.preset, "desk or paper preset")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->capture_default_str();
    sub->add_option("--config", sa.common.config_path, "key=value config file");
    sub->add_option("--set", sa.common.sets, "override: --set key=value (repeatable)");
    return &sa;
  };

  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  auto* gen_args = add_common(gen, "generate");
  gen->add_option("--out", gen_args->out, "output dataset directory")->required();

  auto* tr = app.add_subcommand("train", "train a detector");
  auto* tr_args = add_common(tr, "train");
  tr->add_option("--data", tr_args->data, "dataset directory")->required();
  tr->add_option("--run", tr_args->run, "run/checkpoint directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* ev_args = add_common(ev, "eval");
  ev->add_option("--data", ev_args->data, "dataset directory")->required();
  ev->add_option("--run", ev_args->run, "run directory with checkpoints")->required();

  auto* in = app.add_subcommand("infer", "run inference and export overlays");
  auto* in_args = add_common(in, "infer");
  in->add_option("--data", in_args->data, "dataset directory")->required();
  in->add_option("--run", in_args->run, "run directory with checkpoints")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_args->common, gen_args->out);
    if (tr->parsed()) return cmd_train(tr_args->common, tr_args->data, tr_args->run);
    if (ev->parsed()) return cmd_eval(ev_args->common, ev_args->data, ev_args->run);
    if (in->parsed()) return cmd_infer(in_args->common, in_args->data, in_args->run);
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const GenError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace hifi::cli

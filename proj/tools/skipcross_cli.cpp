// Command-line entry point for the full pipeline: dataset synthesis, cloud
// projection, training, evaluation, prediction, strategy comparison and the
// 64-bit gradient check. Every run writes its resolved configuration next to
// its outputs so results stay reproducible from the artifacts alone.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "skipcross/checkpoint.hpp"
#include "skipcross/config.hpp"
#include "skipcross/data.hpp"
#include "skipcross/gradcheck.hpp"
#include "skipcross/model.hpp"
#include "skipcross/synth.hpp"
#include "skipcross/train.hpp"

namespace fs = std::filesystem;
using namespace skipcross;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out;
  std::string checkpoint;
  uint64_t seed = 0;
  bool deterministic = false;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_checkpoint = false) {
  cmd->add_option("--config", f.config_path, "INI config file");
  cmd->add_option("--out", f.out, "output directory (overrides [run] out)");
  f.seed_opt = cmd->add_option("--seed", f.seed, "seed (overrides [run] seed)");
  if (with_checkpoint) {
    cmd->add_option("--checkpoint", f.checkpoint, "checkpoint file")
        ->required();
  }
  cmd->add_flag("--deterministic", f.deterministic,
                "force single-threaded numeric paths");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg =
      f.config_path.empty() ? RunConfig{} : load_run_config(f.config_path);
  if (f.seed_opt && f.seed_opt->count() > 0) {
    cfg.seed = f.seed;
    cfg.synth.seed = f.seed;
    cfg.train.seed = f.seed;
  }
  if (!f.out.empty()) cfg.out = f.out;
  cfg.validate();
  return cfg;
}

fs::path prepare_out_dir(const RunConfig& cfg) {
  const fs::path out(cfg.out);
  fs::create_directories(out);
  save_run_config(cfg, out / "config.ini");
  return out;
}

std::vector<Sample> load_samples(const std::string& root,
                                 const RunConfig& cfg) {
  const DatasetManifest manifest = load_manifest(root, std::cerr);
  std::vector<Sample> samples;
  samples.reserve(manifest.size());
  for (const ManifestEntry& e : manifest.entries) {
    samples.push_back(load_sample(e, cfg.height, cfg.width, cfg.adi));
  }
  return samples;
}

std::string eval_root(const RunConfig& cfg) {
  if (!cfg.val_root.empty()) return cfg.val_root;
  if (!cfg.train_root.empty()) return cfg.train_root;
  throw ConfigError("set [data] val_root or train_root");
}

nlohmann::json report_json(const MetricsReport& r) {
  return {{"maxf", r.maxf},   {"maxf_threshold", r.maxf_threshold},
          {"ap", r.ap},       {"pre", r.pre},
          {"rec", r.rec},     {"f1", r.f1},
          {"f2", r.f2},       {"fpr", r.fpr},
          {"fnr", r.fnr},     {"miou", r.miou},
          {"acc", r.acc}};
}

void print_report_row(const std::string& label, const MetricsReport& r) {
  std::printf("%-10s maxf %.4f  ap %.4f  pre %.4f  rec %.4f  fpr %.4f  fnr %.4f\n",
              label.c_str(), r.maxf, r.ap, r.pre, r.rec, r.fpr, r.fnr);
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_synth(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  const fs::path out = prepare_out_dir(cfg);
  write_synth_dataset(cfg.synth, cfg.synth_count, out);
  std::printf("wrote %d synthetic samples to %s\n", cfg.synth_count,
              out.string().c_str());
  return 0;
}

int cmd_project(const CommonFlags& flags, const std::string& cloud_path,
                const std::string& calib_path) {
  const RunConfig cfg = resolve_config(flags);
  const fs::path out = prepare_out_dir(cfg);
  const PointCloud cloud = read_point_cloud(cloud_path);
  const Calibration calib = load_calibration(calib_path);
  const Image adi =
      adi_from_cloud(cloud, calib, cfg.width, cfg.height, cfg.adi);
  const fs::path file = out / "adi.pgm";
  write_image(adi, file);
  std::printf("projected %zu points into %s\n", cloud.size(),
              file.string().c_str());
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  if (cfg.train_root.empty()) {
    throw ConfigError("train needs [data] train_root");
  }
  const fs::path out = prepare_out_dir(cfg);
  const std::vector<Sample> train_set = load_samples(cfg.train_root, cfg);
  const std::vector<Sample> val_set =
      cfg.val_root.empty() || cfg.val_root == cfg.train_root
          ? train_set
          : load_samples(cfg.val_root, cfg);

  SkipcrossNet net = SkipcrossNet::build(cfg.topology(), cfg.seed);
  std::printf("training %s: %lld parameters, %zu train / %zu val samples\n",
              strategy_name(cfg.topology().strategy),
              static_cast<long long>(net.param_count()), train_set.size(),
              val_set.size());

  const TrainHistory history =
      fit(net, train_set, val_set, cfg.train, [](const EpochRecord& r) {
        std::printf("epoch %3d  loss %.4f  val_maxf %.4f  lr %.3g  (%.2fs)\n",
                    r.epoch, r.train_loss, r.val_maxf,
                    static_cast<double>(r.lr), r.seconds);
        return true;
      });

  save_weights(net, out / "checkpoint_last.skx");
  if (!history.best_weights.empty()) {
    std::ofstream best(out / "checkpoint_best.skx", std::ios::binary);
    best.write(history.best_weights.data(),
               static_cast<std::streamsize>(history.best_weights.size()));
    if (!best) throw DataError("cannot write best checkpoint");
  } else {
    save_weights(net, out / "checkpoint_best.skx");
  }
  std::ofstream csv(out / "history.csv");
  csv << history_csv(history);
  if (!csv) throw DataError("cannot write history.csv");
  std::printf("best val_maxf %.4f at epoch %d; artifacts in %s\n",
              history.best_maxf, history.best_epoch, out.string().c_str());
  return 0;
}

int cmd_eval(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  const fs::path out = prepare_out_dir(cfg);
  SkipcrossNet net = load_weights(flags.checkpoint);
  const std::vector<Sample> samples = load_samples(eval_root(cfg), cfg);
  const MetricsReport report =
      evaluate_dataset(net, samples, cfg.train.batch_size,
                       cfg.train.camera_only);

  nlohmann::json j = report_json(report);
  j["samples"] = samples.size();
  j["checkpoint"] = flags.checkpoint;
  std::ofstream jf(out / "metrics.json");
  jf << j.dump(2) << "\n";
  if (!jf) throw DataError("cannot write metrics.json");
  print_report_row("eval", report);
  return 0;
}

int cmd_predict(const CommonFlags& flags, int index) {
  const RunConfig cfg = resolve_config(flags);
  const fs::path out = prepare_out_dir(cfg);
  SkipcrossNet net = load_weights(flags.checkpoint);
  const DatasetManifest manifest = load_manifest(eval_root(cfg), std::cerr);
  if (index < 0 || static_cast<size_t>(index) >= manifest.size()) {
    throw UsageError("sample index " + std::to_string(index) +
                     " outside dataset of " + std::to_string(manifest.size()));
  }
  const ManifestEntry& entry = manifest.entries[static_cast<size_t>(index)];
  const Sample sample = load_sample(entry, cfg.height, cfg.width, cfg.adi);
  std::vector<const Sample*> one{&sample};
  const Batch batch = make_batch(one);
  const NetworkOutput result =
      cfg.train.camera_only ? net.forward_rgb_only(batch.rgb)
                            : net.forward(batch.rgb, batch.adi);

  Image confidence(1, cfg.height, cfg.width);
  Mask mask(cfg.height, cfg.width);
  const float* conf = result.road_confidence.data();
  for (int64_t i = 0; i < confidence.pixels(); ++i) {
    confidence.data[static_cast<size_t>(i)] = conf[i];
    mask.data[static_cast<size_t>(i)] = conf[i] > 0.5f ? 1 : 0;
  }
  write_image(confidence, out / (entry.id + "_confidence.pgm"));
  write_mask(mask, out / (entry.id + "_mask.pgm"));
  std::printf("wrote %s_{confidence,mask}.pgm to %s\n", entry.id.c_str(),
              out.string().c_str());
  return 0;
}

int cmd_compare(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  if (cfg.train_root.empty()) {
    throw ConfigError("compare needs [data] train_root");
  }
  const fs::path out = prepare_out_dir(cfg);
  const std::vector<Sample> train_set = load_samples(cfg.train_root, cfg);
  const std::vector<Sample> val_set =
      cfg.val_root.empty() || cfg.val_root == cfg.train_root
          ? train_set
          : load_samples(cfg.val_root, cfg);

  struct Row {
    FusionStrategy strategy;
    MetricsReport report;
  };
  std::vector<Row> rows;
  for (FusionStrategy strategy :
       {FusionStrategy::early, FusionStrategy::middle, FusionStrategy::late,
        FusionStrategy::cross, FusionStrategy::skipcross}) {
    RunConfig c = cfg;
    c.strategy = strategy;
    SkipcrossNet net = SkipcrossNet::build(c.topology(), c.seed);
    std::printf("training %s ...\n", strategy_name(strategy));
    const TrainHistory history = fit(net, train_set, val_set, c.train);
    SkipcrossNet best = history.best_weights.empty()
                            ? std::move(net)
                            : load_weights_from_string(history.best_weights);
    rows.push_back({strategy, evaluate_dataset(best, val_set,
                                               c.train.batch_size, false)});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.report.maxf > b.report.maxf;
  });

  std::printf("\n%-10s %7s %7s %7s %7s %7s %7s\n", "strategy", "maxf", "ap",
              "pre", "rec", "fpr", "fnr");
  std::ofstream csv(out / "compare.csv");
  csv << "strategy,maxf,ap,pre,rec,fpr,fnr\n";
  char line[256];
  for (const Row& r : rows) {
    std::printf("%-10s %7.4f %7.4f %7.4f %7.4f %7.4f %7.4f\n",
                strategy_name(r.strategy), r.report.maxf, r.report.ap,
                r.report.pre, r.report.rec, r.report.fpr, r.report.fnr);
    std::snprintf(line, sizeof(line), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  strategy_name(r.strategy), r.report.maxf, r.report.ap,
                  r.report.pre, r.report.rec, r.report.fpr, r.report.fnr);
    csv << line;
  }
  if (!csv) throw DataError("cannot write compare.csv");
  return 0;
}

int cmd_gradcheck(const CommonFlags& flags) {
  RunConfig cfg =
      flags.config_path.empty() ? RunConfig{} : load_run_config(flags.config_path);
  if (flags.seed_opt && flags.seed_opt->count() > 0) cfg.seed = flags.seed;

  // 64-bit copy of a small topology; inputs 1x3x32x32 and 1x1x32x32
  FusionTopology topo;
  topo.stage_blocks = {1, 1, 1};
  topo.stage_channels = {4, 6, 8};
  topo = configure_strategy(FusionStrategy::skipcross, topo);
  auto net = SkipcrossNet64::build(topo, cfg.seed);

  Rng rng(mix_seed(cfg.seed, 0x9d2c5680));
  // move every parameter off the all-zeros point: exact zero activations tie
  // pooling windows and sit on rectifier kinks, where one-sided derivatives
  // legitimately disagree
  for (auto& p : net.params()) {
    for (double& v : p.tensor.values()) v += 0.2 * (rng.uniform() - 0.5);
  }
  Tensor64 rgb = Tensor64::randn({1, 3, 32, 32}, rng, 0.5, true);
  Tensor64 adi = Tensor64::randn({1, 1, 32, 32}, rng, 0.5, true);

  std::vector<Tensor64> leaves = {rgb, adi};
  for (auto& p : net.params()) leaves.push_back(p.tensor);
  const GradCheckResult result = grad_check(
      [&]() {
        return sum_all(net.forward(rgb, adi).logits);
      },
      leaves, 1e-6, 3, &rng);

  std::printf("gradcheck: %lld coordinates, max relative error %.3e\n",
              static_cast<long long>(result.coords_checked),
              result.max_rel_err);
  if (result.max_rel_err >= 1e-4) {
    std::fprintf(stderr, "gradcheck failed: leaf %zu coordinate %lld\n",
                 result.worst_leaf,
                 static_cast<long long>(result.worst_coord));
    throw NumericError("finite-difference mismatch above 1e-4");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"road detection over fused camera and lidar inputs"};
  app.require_subcommand(1);

  CommonFlags synth_f, project_f, train_f, eval_f, predict_f, compare_f,
      gradcheck_f;
  std::string cloud_path, calib_path;
  int predict_index = 0;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_f);

  CLI::App* project = app.add_subcommand(
      "project", "project a point cloud into a normalized ADI image");
  add_common(project, project_f);
  project->add_option("--cloud", cloud_path, "point cloud .bin")->required();
  project->add_option("--calib", calib_path, "calibration .txt")->required();

  CLI::App* train = app.add_subcommand("train", "train a network");
  add_common(train, train_f);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_f, /*with_checkpoint=*/true);

  CLI::App* predict =
      app.add_subcommand("predict", "write confidence and mask for one sample");
  add_common(predict, predict_f, /*with_checkpoint=*/true);
  predict->add_option("--index", predict_index, "sample index in the dataset");

  CLI::App* compare =
      app.add_subcommand("compare", "train and rank all fusion strategies");
  add_common(compare, compare_f);

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "64-bit finite-difference check of the full network");
  add_common(gradcheck, gradcheck_f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_f);
    if (project->parsed()) return cmd_project(project_f, cloud_path, calib_path);
    if (train->parsed()) return cmd_train(train_f);
    if (eval->parsed()) return cmd_eval(eval_f);
    if (predict->parsed()) return cmd_predict(predict_f, predict_index);
    if (compare->parsed()) return cmd_compare(compare_f);
    if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_f);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

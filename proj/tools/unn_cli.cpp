// Command-line front end: simulation, two-stage training, stitched inference,
// evaluation and weight reporting, driven by a sectioned key=value config.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "unn/evaluate.hpp"
#include "unn/runconfig.hpp"

namespace fs = std::filesystem;
using namespace unn;

namespace {

constexpr const char* kVersion = "petunn 1.0.0";

void write_run_metadata(const RunConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.out_dir);
  std::string text = std::string(kVersion) + "\ncommand = " + command + "\n\n" +
                     cfg.snapshot();
  atomic_write_text(cfg.out_dir / "run_metadata.txt", text);
}

UnnModel<float> load_model_for(const RunConfig& cfg, const std::string& model_flag) {
  const fs::path path =
      model_flag.empty() ? stage2_checkpoint_name(cfg.checkpoint_dir(), true)
                         : fs::path(model_flag);
  return load_unn_checkpoint(path);
}

int canonical_level_index(double f) {
  for (int i = 0; i < kNumLevels; ++i)
    if (std::abs(kCountLevels[i] - f) < 1e-9) return i;
  return -1;
}

int cmd_simulate(RunConfig cfg, int subjects_override, const std::string& command) {
  if (subjects_override > 0) cfg.n_subjects = subjects_override;
  cfg.validate();
  write_run_metadata(cfg, command);
  DatasetManifest manifest = build_dataset(cfg.sim_config());
  std::cout << "wrote " << manifest.rows.size() << " volumes for " << cfg.n_subjects
            << " subjects\nmanifest: " << manifest.manifest_path.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, int stage, double count_level, bool resume,
              const std::string& command) {
  write_run_metadata(cfg, command);
  DatasetManifest manifest = load_manifest(cfg.manifest_path());
  if (stage == 1) {
    if (canonical_level_index(count_level) < 0)
      throw ConfigError(
          "train --stage 1 needs --count-level from {0.01,0.02,0.05,0.10,0.25,0.50}");
    TrainConfig tc = cfg.train1;
    tc.count_level = count_level;
    TrainResult r = train_stage1(manifest, cfg.split, cfg.denoiser_config(), tc,
                                 cfg.checkpoint_dir(), resume);
    std::printf("%s: best val SSIM %.5f at step %lld (%lld steps run)\n",
                count_level_label(count_level).c_str(), r.best_val_metric,
                static_cast<long long>(r.best_step), static_cast<long long>(r.steps_run));
    std::cout << "best checkpoint: " << r.best_checkpoint.string() << "\n";
    return 0;
  }
  // Stage 2 needs all six stage-1 checkpoints.
  std::array<fs::path, 6> ckpts;
  std::string missing;
  for (int i = 0; i < kNumLevels; ++i) {
    ckpts[i] = stage1_checkpoint_name(cfg.checkpoint_dir(), kCountLevels[i], true);
    if (!fs::exists(ckpts[i]))
      missing += "\n  " + count_level_label(kCountLevels[i]) + ": " + ckpts[i].string();
  }
  if (!missing.empty())
    throw ConfigError("train --stage 2: missing stage-1 checkpoints:" + missing);
  TrainResult r = train_stage2(manifest, cfg.split, ckpts, cfg.gating_filters,
                               cfg.fusion_filters, cfg.train2, cfg.checkpoint_dir(), resume);
  std::printf("stage 2: best val SSIM %.5f at step %lld (%lld steps run)\n",
              r.best_val_metric, static_cast<long long>(r.best_step),
              static_cast<long long>(r.steps_run));
  std::printf("validation loss %.6f vs uniform-weight baseline %.6f\n", r.final_val_loss,
              r.uniform_baseline_val_loss);
  std::cout << "best checkpoint: " << r.best_checkpoint.string() << "\n";
  return 0;
}

std::vector<std::string> subjects_for_split(const RunConfig& cfg,
                                            const DatasetManifest& manifest,
                                            const std::string& split) {
  Split s;
  if (split == "train") s = Split::Train;
  else if (split == "val") s = Split::Val;
  else if (split == "test") s = Split::Test;
  else throw ConfigError("unknown split '" + split + "' (use train|val|test)");
  auto subjects = split_subjects(manifest, cfg.split, s);
  if (subjects.empty()) throw DataError("split '" + split + "' holds no subjects");
  return subjects;
}

int cmd_infer(const RunConfig& cfg, const std::string& model_flag, const std::string& split,
              const std::string& command) {
  write_run_metadata(cfg, command);
  DatasetManifest manifest = load_manifest(cfg.manifest_path());
  auto subjects = subjects_for_split(cfg, manifest, split);
  UnnModel<float> model = load_model_for(cfg, model_flag);
  const fs::path dir = cfg.out_dir / "denoised";
  fs::create_directories(dir);

  std::string weights_csv = "subject,count_level,slab_offset,w1,w2,w3,w4,w5,w6\n";
  for (const auto& subject : subjects)
    for (double level : kCountLevels) {
      auto row = manifest.find(subject, level);
      if (!row) continue;
      Volume input = load_volume(manifest.resolve(*row));
      InferenceResult r = infer_volume(input, unn_slab_model(model), cfg.inference);
      const std::string stem = subject + "_cl" + format_count_level(level) + "_unn";
      save_volume(r.volume, dir / (stem + ".hdr"));
      for (std::size_t k = 0; k < r.slab_weights.size(); ++k) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%s,%lld,%.8f,%.8f,%.8f,%.8f,%.8f,%.8f\n",
                      subject.c_str(), format_count_level(level).c_str(),
                      static_cast<long long>(r.slab_offsets[k]), r.slab_weights[k][0],
                      r.slab_weights[k][1], r.slab_weights[k][2], r.slab_weights[k][3],
                      r.slab_weights[k][4], r.slab_weights[k][5]);
        weights_csv += buf;
      }
      std::cout << "denoised " << subject << " @ " << format_count_level(level) << "\n";
    }
  atomic_write_text(dir / "slab_weights.csv", weights_csv);
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& model_flag, const std::string& split,
                 std::string out_csv, const std::string& command) {
  write_run_metadata(cfg, command);
  DatasetManifest manifest = load_manifest(cfg.manifest_path());
  auto subjects = subjects_for_split(cfg, manifest, split);
  UnnModel<float> model = load_model_for(cfg, model_flag);
  if (out_csv.empty()) out_csv = (cfg.out_dir / "metrics.csv").string();
  EvaluateResult r = evaluate(manifest, subjects, model, cfg.inference, out_csv);
  std::cout << format_summary_grid(r.mean_rows);
  std::cout << "metrics: " << out_csv << "\n";
  return 0;
}

int cmd_report_weights(const RunConfig& cfg, const std::string& model_flag,
                       const std::string& split, std::string out_csv,
                       const std::string& command) {
  write_run_metadata(cfg, command);
  DatasetManifest manifest = load_manifest(cfg.manifest_path());
  auto subjects = subjects_for_split(cfg, manifest, split);
  UnnModel<float> model = load_model_for(cfg, model_flag);
  if (out_csv.empty()) out_csv = (cfg.out_dir / "weights.csv").string();
  WeightReport r = report_weights(manifest, subjects, model, cfg.inference, out_csv);
  std::cout << "weight rows: " << r.rows.size() << "\nweights: " << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-count-level PET denoising toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false, deterministic = false;
  int jobs = 0;
  app.add_option("--config", config_path, "run config file");
  app.add_option("--out", out_dir, "output directory (overrides [output] dir)");
  app.add_option("--seed", seed, "seed override")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--jobs", jobs, "subject-level parallelism");
  app.add_flag("--deterministic", deterministic, "single-threaded reproducible mode");

  auto* sim = app.add_subcommand("simulate", "generate the synthetic multi-count dataset");
  int subjects_override = 0;
  sim->add_option("--subjects", subjects_override, "number of subjects");

  auto* train = app.add_subcommand("train", "stage-1 denoiser or stage-2 gating training");
  int stage = 0;
  double count_level = 0;
  bool resume = false;
  train->add_option("--stage", stage, "1 or 2")->required();
  train->add_option("--count-level", count_level, "stage-1 count level fraction");
  train->add_flag("--resume", resume, "continue from the last checkpoint");

  auto* infer = app.add_subcommand("infer", "stitched slab inference over a split");
  auto* eval = app.add_subcommand("evaluate", "PSNR/NRMSE table over a split");
  auto* repw = app.add_subcommand("report-weights", "gating weight distribution report");
  std::string model_flag, split = "test", out_csv;
  for (CLI::App* c : {infer, eval, repw}) {
    c->add_option("--model", model_flag, "model checkpoint path");
    c->add_option("--split", split, "train|val|test");
  }
  for (CLI::App* c : {eval, repw}) c->add_option("--out-csv", out_csv, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  std::string command;
  for (int i = 0; i < argc; ++i) command += std::string(i ? " " : "") + argv[i];

  try {
    RunConfig cfg =
        config_path.empty() ? default_run_config() : parse_run_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_set) {
      cfg.seed = seed;
      cfg.train1.seed = seed;
      cfg.train2.seed = seed;
    }
    if (jobs > 0) cfg.jobs = jobs;
    if (deterministic) {
      cfg.jobs = 1;
#ifdef _OPENMP
      omp_set_num_threads(1);
#endif
    }
    cfg.validate();

    if (sim->parsed()) return cmd_simulate(cfg, subjects_override, command);
    if (train->parsed()) return cmd_train(cfg, stage, count_level, resume, command);
    if (infer->parsed()) return cmd_infer(cfg, model_flag, split, command);
    if (eval->parsed()) return cmd_evaluate(cfg, model_flag, split, out_csv, command);
    if (repw->parsed()) return cmd_report_weights(cfg, model_flag, split, out_csv, command);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

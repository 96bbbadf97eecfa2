#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "unn/checkpoint.hpp"
#include "unn/dataset.hpp"

using namespace unn;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "unn_cli_capture";
  fs::create_directories(dir);
  const fs::path out = dir / ("out" + std::to_string(counter++) + ".txt");
  const std::string cmd =
      std::string(UNN_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WEXITSTATUS(rc), ss.str()};
}

fs::path cli_workspace() {
  const fs::path dir = fs::temp_directory_path() / "unn_cli_test";
  return dir;
}

fs::path write_small_config() {
  const fs::path dir = cli_workspace();
  fs::create_directories(dir);
  const fs::path cfg = dir / "run.cfg";
  std::ofstream out(cfg);
  out << "[dataset]\n"
         "data_dir = data\n"
         "subjects = 3\n"
         "train_subjects = 1\n"
         "val_subjects = 1\n"
         "test_subjects = 1\n"
         "full_counts = 4e5\n"
         "angles = 20\n"
         "bins = 48\n"
         "[phantom]\n"
         "grid = 12 31 31\n"
         "[recon]\n"
         "iterations = 2\n"
         "subsets = 4\n"
         "[model]\n"
         "base_filters = 2\n"
         "gating_filters = 2\n"
         "fusion_filters = 2\n"
         "[train1]\n"
         "batch_size = 2\n"
         "patch = 12 31 31\n"
         "max_steps = 3\n"
         "eval_every = 3\n"
         "[train2]\n"
         "slab_depth = 12\n"
         "max_steps = 3\n"
         "eval_every = 3\n"
         "[inference]\n"
         "patch_depth = 6\n"
         "stride = 3\n"
         "[output]\n"
         "dir = out\n"
         "seed = 11\n";
  return cfg;
}

std::string file_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli: simulate writes 7 volumes per subject, reruns are identical") {
  fs::remove_all(cli_workspace());
  const fs::path cfg = write_small_config();

  CliResult r = run_cli("--config " + cfg.string() + " simulate");
  CHECK(r.exit_code == 0);

  DatasetManifest m = load_manifest(cli_workspace() / "data" / "manifest.csv");
  CHECK(m.rows.size() == 3 * 7);

  const std::string first = file_text(cli_workspace() / "data" / "manifest.csv");
  CliResult r2 = run_cli("--config " + cfg.string() + " simulate");
  CHECK(r2.exit_code == 0);
  CHECK(file_text(cli_workspace() / "data" / "manifest.csv") == first);

  // run metadata snapshot exists
  CHECK(fs::exists(cli_workspace() / "out" / "run_metadata.txt"));
}

TEST_CASE("cli: invalid output directory fails without a partial manifest") {
  const fs::path cfg = write_small_config();
  // /dev/null/<sub> cannot be created; the command must fail cleanly
  const fs::path bad_cfg = cli_workspace() / "bad.cfg";
  {
    std::ofstream out(bad_cfg);
    out << file_text(cfg);
    out << "[dataset]\ndata_dir = /dev/null/unwritable\n";
  }
  CliResult rb = run_cli("--config " + bad_cfg.string() + " simulate");
  CHECK(rb.exit_code != 0);
  CHECK(!fs::exists(fs::path("/dev/null/unwritable/manifest.csv")));
}

TEST_CASE("cli: stage 2 with a missing stage-1 checkpoint names the level") {
  const fs::path cfg = write_small_config();
  const fs::path ckpt_dir = cli_workspace() / "out" / "checkpoints";
  fs::create_directories(ckpt_dir);
  // five placeholder files; Net_50 deliberately missing
  for (double f : {0.01, 0.02, 0.05, 0.10, 0.25})
    std::ofstream(ckpt_dir / ("denoiser_" + format_count_level(f) + "_best.ckpt")) << "x";
  fs::remove(ckpt_dir / "denoiser_0.50_best.ckpt");

  CliResult r = run_cli("--config " + cfg.string() + " train --stage 2");
  CHECK(r.exit_code != 0);
  CHECK(r.output.find("Net_50") != std::string::npos);
  CHECK(r.output.find("Net_25") == std::string::npos);  // present ones not listed
  fs::remove_all(ckpt_dir);
}

TEST_CASE("cli: evaluate on an empty split exits nonzero with a message") {
  const fs::path cfg = write_small_config();
  const fs::path bad_cfg = cli_workspace() / "empty_split.cfg";
  {
    std::ofstream out(bad_cfg);
    out << file_text(cfg);
    out << "[dataset]\ntest_subjects = 0\n";
  }
  CliResult r = run_cli("--config " + bad_cfg.string() + " evaluate");
  CHECK(r.exit_code != 0);
  CHECK(r.output.find("no subjects") != std::string::npos);
}

TEST_CASE("cli: train stage 1 needs a canonical count level") {
  const fs::path cfg = write_small_config();
  CliResult r = run_cli("--config " + cfg.string() + " train --stage 1 --count-level 0.3");
  CHECK(r.exit_code != 0);
  CHECK(r.output.find("count-level") != std::string::npos);
}

TEST_CASE("cli: evaluate stdout grid matches the CSV (untrained model)") {
  const fs::path cfg = write_small_config();
  REQUIRE(fs::exists(cli_workspace() / "data" / "manifest.csv"));

  // a random (untrained) full model checkpoint is enough for consistency
  Rng rng(3);
  DenoiserConfig dc;
  dc.base_filters = 2;
  UnnModel<float> model;
  for (int i = 0; i < kNumLevels; ++i) model.denoisers[i] = make_denoiser<float>(dc, rng);
  NoiseAwareConfig gcfg;
  gcfg.filters = 2;
  gcfg.slab_shape = {6, 31, 31};
  model.gating = make_noise_aware<float>(gcfg, rng);
  FusionConfig fcfg;
  fcfg.filters = 2;
  model.fusion = make_fusion<float>(fcfg, rng);
  const fs::path ckpt = cli_workspace() / "random_unn.ckpt";
  save_unn_checkpoint(ckpt, model, CheckpointMeta{2, 0, 0, 0});

  CliResult r = run_cli("--config " + cfg.string() + " evaluate --model " + ckpt.string());
  REQUIRE(r.exit_code == 0);

  // every mean CSV value must appear in the printed grid
  std::ifstream csv(cli_workspace() / "out" / "metrics.csv");
  REQUIRE(csv.good());
  std::string line;
  std::getline(csv, line);  // header
  int checked = 0;
  while (std::getline(csv, line)) {
    if (line.rfind("mean,", 0) != 0) continue;
    std::istringstream is(line);
    std::string subject, level, method, psnr_s, nrmse_s;
    std::getline(is, subject, ',');
    std::getline(is, level, ',');
    std::getline(is, method, ',');
    std::getline(is, psnr_s, ',');
    std::getline(is, nrmse_s, ',');
    CHECK(r.output.find(psnr_s + "/" + nrmse_s) != std::string::npos);
    ++checked;
  }
  CHECK(checked == 8 * 6);  // methods x count levels
}

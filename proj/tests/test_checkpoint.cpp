#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "unn/checkpoint.hpp"

using namespace unn;
using namespace unn::testing;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path p = fs::temp_directory_path() / "unn_ckpt_test";
  fs::create_directories(p);
  return p;
}

DenoiserModel<float> small_model(std::uint64_t seed, std::int64_t bf = 2) {
  DenoiserConfig cfg;
  cfg.base_filters = bf;
  cfg.down_stages = 2;
  cfg.up_stages = 2;
  Rng rng(seed);
  return make_denoiser<float>(cfg, rng);
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(in)), {});
}

}  // namespace

TEST_CASE("checkpoint: save -> load -> save is byte-identical") {
  DenoiserModel<float> m = small_model(5);
  CheckpointMeta meta{1, 0.05, 120, 0.91};
  const fs::path p1 = temp_dir() / "a.ckpt";
  const fs::path p2 = temp_dir() / "b.ckpt";
  save_denoiser_checkpoint(p1, m, meta);

  CheckpointMeta meta2;
  DenoiserModel<float> r = load_denoiser_checkpoint(p1, &meta2);
  CHECK(meta2.count_level == doctest::Approx(0.05));
  CHECK(meta2.step == 120);
  save_denoiser_checkpoint(p2, r, meta2);
  CHECK(file_bytes(p1) == file_bytes(p2));

  // weights match bitwise
  auto pa = named_parameters(m);
  auto pb = named_parameters(r);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(std::vector<float>(pa[i].second.data().begin(), pa[i].second.data().end()) ==
          std::vector<float>(pb[i].second.data().begin(), pb[i].second.data().end()));
  }
}

TEST_CASE("checkpoint: distinct errors for corrupt, version and fingerprint problems") {
  DenoiserModel<float> m = small_model(7);
  CheckpointMeta meta{1, 0.01, 10, 0.5};
  const fs::path good = temp_dir() / "good.ckpt";
  save_denoiser_checkpoint(good, m, meta);

  // truncation -> corrupt
  const fs::path trunc = temp_dir() / "trunc.ckpt";
  fs::copy_file(good, trunc, fs::copy_options::overwrite_existing);
  fs::resize_file(trunc, fs::file_size(trunc) / 2);
  try {
    load_denoiser_checkpoint(trunc);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::Corrupt);
  }

  // wrong magic -> corrupt
  const fs::path junk = temp_dir() / "junk.ckpt";
  {
    std::ofstream out(junk, std::ios::binary);
    out << "definitely not a checkpoint";
  }
  try {
    load_denoiser_checkpoint(junk);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::Corrupt);
  }

  // version bump -> version mismatch (version lives after the 8-byte magic)
  const fs::path vers = temp_dir() / "vers.ckpt";
  {
    std::vector<char> bytes = file_bytes(good);
    bytes[8] = 99;
    std::ofstream out(vers, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_denoiser_checkpoint(vers);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::VersionMismatch);
  }

  CHECK_THROWS_AS(load_denoiser_checkpoint(temp_dir() / "missing.ckpt"), CheckpointError);
}

TEST_CASE("checkpoint: stage-2 assembly accepts matching fingerprints only") {
  DenoiserModel<float> m = small_model(9);
  CheckpointMeta meta{1, 0.05, 10, 0.5};
  const fs::path p = temp_dir() / "asm.ckpt";
  save_denoiser_checkpoint(p, m, meta);

  CHECK_NOTHROW(load_denoiser_for_assembly(p, m.cfg, 0.05));

  DenoiserConfig other = m.cfg;
  other.base_filters = 4;
  try {
    load_denoiser_for_assembly(p, other, 0.05);
    FAIL("expected fingerprint mismatch");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::FingerprintMismatch);
  }
  // wrong count level is also a fingerprint problem
  CHECK_THROWS_AS(load_denoiser_for_assembly(p, m.cfg, 0.25), CheckpointError);
}

TEST_CASE("checkpoint: unn round trip with forward equivalence") {
  Rng rng(11);
  DenoiserConfig dc;
  dc.base_filters = 2;
  dc.down_stages = 2;
  dc.up_stages = 2;
  UnnModel<float> model;
  for (int i = 0; i < kNumLevels; ++i) model.denoisers[i] = make_denoiser<float>(dc, rng);
  NoiseAwareConfig gcfg;
  gcfg.filters = 2;
  gcfg.slab_shape = {6, 15, 15};
  model.gating = make_noise_aware<float>(gcfg, rng);
  FusionConfig fcfg;
  fcfg.filters = 2;
  model.fusion = make_fusion<float>(fcfg, rng);

  const fs::path p = temp_dir() / "unn.ckpt";
  save_unn_checkpoint(p, model, CheckpointMeta{2, 0, 50, 0.8});
  UnnModel<float> r = load_unn_checkpoint(p);

  TensorT<float> x({1, 1, 6, 15, 15});
  fill_random(x, rng, 0.0, 1.0);
  UnnForwardResult<float> a = unn_forward(x, model);
  UnnForwardResult<float> b = unn_forward(x, r);
  CHECK(std::vector<float>(a.out.data().begin(), a.out.data().end()) ==
        std::vector<float>(b.out.data().begin(), b.out.data().end()));
  CHECK(std::vector<float>(a.weights.data().begin(), a.weights.data().end()) ==
        std::vector<float>(b.weights.data().begin(), b.weights.data().end()));
}

#include <doctest.h>

#include "oracles.hpp"
#include "unn/infer.hpp"

using namespace unn;
using namespace unn::testing;

namespace {

Volume random_volume(std::array<std::int64_t, 3> dims, std::uint64_t seed) {
  Volume v;
  v.dims = dims;
  v.subject_id = "s";
  v.data.resize(static_cast<std::size_t>(v.numel()));
  Rng rng(seed);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(0, 2));
  return v;
}

}  // namespace

TEST_CASE("slab offsets: tiling arithmetic and end alignment") {
  InferenceConfig icfg;  // depth 20, stride 10
  CHECK(slab_offsets(40, icfg) == std::vector<std::int64_t>{0, 10, 20});
  CHECK(slab_offsets(20, icfg) == std::vector<std::int64_t>{0});
  CHECK(slab_offsets(32, icfg) == std::vector<std::int64_t>{0, 10, 12});
  CHECK_THROWS_AS(slab_offsets(12, icfg), ShapeError);
}

TEST_CASE("infer: interior coverage is 2 for stride 10 / depth 20") {
  Volume v = random_volume({40, 8, 8}, 1);
  InferenceConfig icfg;
  // model that adds 1: coverage-correct averaging must give input+1 everywhere
  SlabModel plus_one = [](const TensorT<float>& slab) {
    TensorT<float> out = slab.clone();
    for (auto& x : out.data()) x += 1.0f;
    return SlabOutput{out, std::nullopt};
  };
  InferenceResult r = infer_volume(v, plus_one, icfg);
  REQUIRE(r.slab_offsets == std::vector<std::int64_t>{0, 10, 20});
  for (std::int64_t i = 0; i < v.numel(); ++i)
    CHECK(r.volume.data[i] == doctest::Approx(v.data[i] + 1.0f).epsilon(1e-6));
}

TEST_CASE("infer: identity model reproduces the input (seam-free averaging)") {
  for (std::int64_t depth : {20, 32, 40, 55}) {
    Volume v = random_volume({depth, 6, 6}, 7 + depth);
    InferenceConfig icfg;
    SlabModel identity = [](const TensorT<float>& slab) {
      return SlabOutput{slab.clone(), std::nullopt};
    };
    InferenceResult r = infer_volume(v, identity, icfg);
    for (std::int64_t i = 0; i < v.numel(); ++i)
      CHECK(std::abs(r.volume.data[i] - v.data[i]) < 1e-6f);
  }
}

TEST_CASE("infer: single slab equals a direct forward pass") {
  Volume v = random_volume({20, 31, 31}, 3);
  DenoiserConfig dc;
  dc.base_filters = 2;
  Rng rng(5);
  DenoiserModel<float> m = make_denoiser<float>(dc, rng);
  InferenceConfig icfg;
  InferenceResult r = infer_volume(v, denoiser_slab_model(m), icfg);
  REQUIRE(r.slab_offsets.size() == 1);
  TensorT<float> direct = denoiser_forward(volume_to_tensor(v), m);
  for (std::int64_t i = 0; i < v.numel(); ++i)
    CHECK(r.volume.data[i] == direct.data()[i]);
}

TEST_CASE("infer: unn slab model reports one weight vector per slab") {
  Volume v = random_volume({12, 15, 15}, 9);
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

  InferenceConfig icfg;
  icfg.patch_depth = 6;
  icfg.stride = 3;
  InferenceResult r = infer_volume(v, unn_slab_model(model), icfg);
  CHECK(r.slab_weights.size() == r.slab_offsets.size());
  for (const auto& w : r.slab_weights) {
    double sum = 0;
    for (double x : w) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }
}

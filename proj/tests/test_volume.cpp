#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "unn/rng.hpp"
#include "unn/volume.hpp"

using namespace unn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path p = fs::temp_directory_path() / "unn_volume_test";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("volume save/load round trip") {
  Volume v;
  v.dims = {3, 4, 5};
  v.voxel_size_mm = {1.65, 1.65, 1.65};
  v.count_level = 0.05;
  v.subject_id = "s007";
  Rng rng(1);
  v.data.resize(static_cast<std::size_t>(v.numel()));
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(0, 2));

  const fs::path hdr = temp_dir() / "vol.hdr";
  save_volume(v, hdr);
  Volume r = load_volume(hdr);
  CHECK(r.dims == v.dims);
  CHECK(r.voxel_size_mm == v.voxel_size_mm);
  CHECK(r.count_level == doctest::Approx(v.count_level));
  CHECK(r.subject_id == v.subject_id);
  CHECK(r.data == v.data);
}

TEST_CASE("volume load errors carry the path") {
  const fs::path missing = temp_dir() / "nope.hdr";
  CHECK_THROWS_WITH_AS(load_volume(missing), doctest::Contains("nope.hdr"), DataError);

  // truncated payload
  Volume v;
  v.dims = {2, 2, 2};
  v.subject_id = "s";
  v.data.assign(8, 1.0f);
  const fs::path hdr = temp_dir() / "trunc.hdr";
  save_volume(v, hdr);
  fs::path raw = hdr;
  raw.replace_extension(".raw");
  fs::resize_file(raw, 8);
  CHECK_THROWS_WITH_AS(load_volume(hdr), doctest::Contains("truncated"), DataError);

  // unknown header key
  const fs::path bad = temp_dir() / "bad.hdr";
  {
    std::ofstream out(bad);
    out << "dims=2 2 2\nmystery=1\ndtype=f32le\n";
  }
  CHECK_THROWS_WITH_AS(load_volume(bad), doctest::Contains("mystery"), DataError);
}

TEST_CASE("volume/tensor round trip") {
  Volume v;
  v.dims = {2, 3, 4};
  v.subject_id = "s";
  v.data.resize(24);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(i);
  TensorT<float> t = volume_to_tensor(v);
  CHECK(t.shape() == std::vector<std::int64_t>{1, 1, 2, 3, 4});
  Volume back = tensor_to_volume(t, v);
  CHECK(back.data == v.data);
}

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "unn/errors.hpp"
#include "unn/tensor.hpp"

namespace unn {

// A reconstructed 3-D scalar field. Data is row-major (D,H,W); voxel sizes
// are (z,y,x) in millimetres; count_level is the retained-count fraction in
// (0,1], with 1.0 marking the full-count reference.
struct Volume {
  std::array<std::int64_t, 3> dims{0, 0, 0};  // D,H,W
  std::array<double, 3> voxel_size_mm{1.0, 1.0, 1.0};
  double count_level = 1.0;
  std::string subject_id;
  std::vector<float> data;

  std::int64_t numel() const { return dims[0] * dims[1] * dims[2]; }
  float& at(std::int64_t d, std::int64_t h, std::int64_t w) {
    return data[(d * dims[1] + h) * dims[2] + w];
  }
  float at(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return data[(d * dims[1] + h) * dims[2] + w];
  }
  void validate() const;
};

// On-disk format: "<stem>.hdr" text sidecar (key=value) plus "<stem>.raw"
// little-endian float32 payload. Paths below always reference the header.
void save_volume(const Volume& v, const std::filesystem::path& header_path);
Volume load_volume(const std::filesystem::path& header_path);

// [1,1,D,H,W] tensor view of a volume (copies).
TensorT<float> volume_to_tensor(const Volume& v);
Volume tensor_to_volume(const TensorT<float>& t, const Volume& like);

}  // namespace unn

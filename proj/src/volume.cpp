#include "unn/volume.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace unn {

namespace fs = std::filesystem;

void Volume::validate() const {
  for (auto e : dims)
    if (e < 1) throw DataError("volume extents must be >= 1");
  for (auto v : voxel_size_mm)
    if (v <= 0) throw DataError("voxel sizes must be > 0");
  if (count_level <= 0 || count_level > 1.0)
    throw DataError("count_level must lie in (0,1]");
  if (static_cast<std::int64_t>(data.size()) != numel())
    throw DataError("volume payload size does not match dims");
}

static fs::path raw_path_for(const fs::path& header_path) {
  fs::path p = header_path;
  p.replace_extension(".raw");
  return p;
}

void save_volume(const Volume& v, const fs::path& header_path) {
  v.validate();
  const fs::path raw_path = raw_path_for(header_path);
  {
    std::ofstream hdr(header_path);
    if (!hdr) throw DataError("cannot write header " + header_path.string());
    char buf[256];
    std::snprintf(buf, sizeof(buf), "dims=%lld %lld %lld\n",
                  static_cast<long long>(v.dims[0]), static_cast<long long>(v.dims[1]),
                  static_cast<long long>(v.dims[2]));
    hdr << buf;
    std::snprintf(buf, sizeof(buf), "voxel_size_mm=%.17g %.17g %.17g\n",
                  v.voxel_size_mm[0], v.voxel_size_mm[1], v.voxel_size_mm[2]);
    hdr << buf;
    std::snprintf(buf, sizeof(buf), "count_level=%.17g\n", v.count_level);
    hdr << buf;
    hdr << "subject_id=" << v.subject_id << "\n";
    hdr << "dtype=f32le\n";
    if (!hdr) throw DataError("failed writing header " + header_path.string());
  }
  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw DataError("cannot write payload " + raw_path.string());
  raw.write(reinterpret_cast<const char*>(v.data.data()),
            static_cast<std::streamsize>(v.data.size() * sizeof(float)));
  if (!raw) throw DataError("failed writing payload " + raw_path.string());
}

Volume load_volume(const fs::path& header_path) {
  std::ifstream hdr(header_path);
  if (!hdr) throw DataError("cannot open volume header " + header_path.string());
  Volume v;
  bool have_dims = false, have_dtype = false;
  std::string line;
  while (std::getline(hdr, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("malformed header line in " + header_path.string() + ": " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    std::istringstream is(val);
    if (key == "dims") {
      if (!(is >> v.dims[0] >> v.dims[1] >> v.dims[2]))
        throw DataError("bad dims in " + header_path.string());
      have_dims = true;
    } else if (key == "voxel_size_mm") {
      if (!(is >> v.voxel_size_mm[0] >> v.voxel_size_mm[1] >> v.voxel_size_mm[2]))
        throw DataError("bad voxel_size_mm in " + header_path.string());
    } else if (key == "count_level") {
      if (!(is >> v.count_level)) throw DataError("bad count_level in " + header_path.string());
    } else if (key == "subject_id") {
      v.subject_id = val;
    } else if (key == "dtype") {
      if (val != "f32le")
        throw DataError("unsupported dtype '" + val + "' in " + header_path.string());
      have_dtype = true;
    } else {
      throw DataError("unknown header key '" + key + "' in " + header_path.string());
    }
  }
  if (!have_dims || !have_dtype)
    throw DataError("incomplete volume header " + header_path.string());

  const fs::path raw_path = raw_path_for(header_path);
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw DataError("cannot open volume payload " + raw_path.string());
  v.data.resize(static_cast<std::size_t>(v.numel()));
  raw.read(reinterpret_cast<char*>(v.data.data()),
           static_cast<std::streamsize>(v.data.size() * sizeof(float)));
  if (raw.gcount() != static_cast<std::streamsize>(v.data.size() * sizeof(float)))
    throw DataError("volume payload " + raw_path.string() + " is truncated");
  v.validate();
  return v;
}

TensorT<float> volume_to_tensor(const Volume& v) {
  TensorT<float> t({1, 1, v.dims[0], v.dims[1], v.dims[2]});
  std::copy(v.data.begin(), v.data.end(), t.data().begin());
  return t;
}

Volume tensor_to_volume(const TensorT<float>& t, const Volume& like) {
  if (t.numel() != like.numel())
    throw ShapeError("tensor_to_volume: element count mismatch");
  Volume out = like;
  std::copy(t.data().begin(), t.data().end(), out.data.begin());
  return out;
}

}  // namespace unn

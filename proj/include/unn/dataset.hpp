#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unn/errors.hpp"

namespace unn {

struct ManifestRow {
  std::string subject_id;
  double count_level = 1.0;
  std::string path;  // volume header path, relative to the manifest location
  std::string role;  // "label" (full count) or "input"
};

struct DatasetManifest {
  std::filesystem::path manifest_path;  // where it was loaded from / saved to
  std::vector<ManifestRow> rows;

  std::vector<std::string> subjects() const;  // unique, in first-seen order
  std::optional<ManifestRow> find(const std::string& subject, double count_level) const;
  std::filesystem::path resolve(const ManifestRow& row) const;
};

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Deterministic split by subject order: the first `train` subjects train, the
// next `val` validate, the remaining `test` subjects test.
struct SplitSpec {
  int train = 6;
  int val = 2;
  int test = 4;
};

enum class Split { Train, Val, Test };

std::vector<std::string> split_subjects(const DatasetManifest& m, const SplitSpec& spec,
                                        Split which);

std::string format_count_level(double f);  // canonical "0.01" ... "1.00"

}  // namespace unn

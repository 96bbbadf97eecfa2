#pragma once

#include <filesystem>

#include "unn/dataset.hpp"
#include "unn/infer.hpp"
#include "unn/metrics.hpp"
#include "unn/models.hpp"

namespace unn {

// Method tags used in metric reports, in display order.
std::vector<std::string> evaluation_methods();  // input, Net_1..Net_50, UNN_ws, UNN_out

struct EvaluateResult {
  std::vector<MetricReport> subject_rows;
  std::vector<MetricReport> mean_rows;  // subject == "mean"
  std::filesystem::path csv_path;
};

// Whole-volume PSNR/NRMSE against the full-count label for every
// subject x count level x method. All methods share one stitched slab sweep
// per (subject, level). Missing volumes are skipped with a warning.
EvaluateResult evaluate(const DatasetManifest& manifest,
                        const std::vector<std::string>& subjects,
                        const UnnModel<float>& model, const InferenceConfig& icfg,
                        const std::filesystem::path& out_csv);

// Count-level columns x method rows, each cell "psnr/nrmse", built from the
// mean rows with the same float formatting as the CSV.
std::string format_summary_grid(const std::vector<MetricReport>& mean_rows);

struct WeightReportRow {
  std::string subject;  // subject id, "mean" or "std"
  double count_level = 0;
  std::array<double, 6> w{};
};

struct WeightReport {
  std::vector<WeightReportRow> rows;
  std::filesystem::path csv_path;
};

// Slab-averaged gating weights per test subject and count level, with
// per-level mean and standard deviation rows appended.
WeightReport report_weights(const DatasetManifest& manifest,
                            const std::vector<std::string>& subjects,
                            const UnnModel<float>& model, const InferenceConfig& icfg,
                            const std::filesystem::path& out_csv);

// Atomic text write shared by the CSV emitters (temp file + rename).
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace unn

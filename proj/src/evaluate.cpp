#include "unn/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace unn {

namespace fs = std::filesystem;

void atomic_write_text(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<std::string> evaluation_methods() {
  std::vector<std::string> m{"input"};
  for (double f : kCountLevels) m.push_back(count_level_label(f));
  m.push_back("UNN_ws");
  m.push_back("UNN_out");
  return m;
}

namespace {

// One slab sweep producing the six per-net stitched volumes plus I_ws and
// I_out; identical offsets and coverage averaging as infer_volume.
struct SweepOutputs {
  std::array<Volume, 6> nets;
  Volume ws;
  Volume out;
};

SweepOutputs multi_output_sweep(const Volume& input, const UnnModel<float>& model,
                                const InferenceConfig& icfg) {
  const auto offsets = slab_offsets(input.dims[0], icfg);
  const std::int64_t H = input.dims[1], W = input.dims[2];
  const std::int64_t slab_elems = icfg.patch_depth * H * W;

  const int kOutputs = kNumLevels + 2;
  std::vector<std::vector<double>> accum(
      kOutputs, std::vector<double>(static_cast<std::size_t>(input.numel()), 0.0));
  std::vector<std::int32_t> coverage(static_cast<std::size_t>(input.numel()), 0);

  for (const std::int64_t off : offsets) {
    TensorT<float> slab({1, 1, icfg.patch_depth, H, W});
    std::copy(input.data.begin() + off * H * W,
              input.data.begin() + off * H * W + slab_elems, slab.data().begin());

    TensorT<float> weights = noise_aware_forward(slab, model.gating);
    std::vector<TensorT<float>> nets;
    nets.reserve(kNumLevels);
    for (int i = 0; i < kNumLevels; ++i)
      nets.push_back(denoiser_forward(slab, model.denoisers[i]));
    TensorT<float> stack = concat_channels(nets);
    TensorT<float> wstack = mul_channel_scalars(stack, weights);
    TensorT<float> ws = sum_channels(wstack);
    TensorT<float> out = fusion_forward(wstack, model.fusion);

    for (int i = 0; i < kNumLevels; ++i) {
      const float* sv = nets[i].raw();
      for (std::int64_t k = 0; k < slab_elems; ++k) accum[i][off * H * W + k] += sv[k];
    }
    const float* wsv = ws.raw();
    const float* ov = out.raw();
    for (std::int64_t k = 0; k < slab_elems; ++k) {
      accum[kNumLevels][off * H * W + k] += wsv[k];
      accum[kNumLevels + 1][off * H * W + k] += ov[k];
      coverage[off * H * W + k] += 1;
    }
  }

  auto finish = [&](int idx) {
    Volume v = input;
    for (std::int64_t i = 0; i < input.numel(); ++i)
      v.data[i] = static_cast<float>(accum[idx][i] / coverage[i]);
    return v;
  };
  SweepOutputs so{{finish(0), finish(1), finish(2), finish(3), finish(4), finish(5)},
                  finish(kNumLevels),
                  finish(kNumLevels + 1)};
  return so;
}

}  // namespace

EvaluateResult evaluate(const DatasetManifest& manifest,
                        const std::vector<std::string>& subjects,
                        const UnnModel<float>& model, const InferenceConfig& icfg,
                        const fs::path& out_csv) {
  EvaluateResult result;
  result.csv_path = out_csv;

  for (const auto& subject : subjects) {
    auto lbl_row = manifest.find(subject, 1.0);
    if (!lbl_row) {
      std::cerr << "warning: no full-count label for subject " << subject << ", skipping\n";
      continue;
    }
    Volume label;
    try {
      label = load_volume(manifest.resolve(*lbl_row));
    } catch (const DataError& e) {
      std::cerr << "warning: " << e.what() << ", skipping subject " << subject << "\n";
      continue;
    }
    for (double level : kCountLevels) {
      auto row = manifest.find(subject, level);
      if (!row) {
        std::cerr << "warning: missing " << format_count_level(level) << " volume for "
                  << subject << ", skipping\n";
        continue;
      }
      Volume input;
      try {
        input = load_volume(manifest.resolve(*row));
      } catch (const DataError& e) {
        std::cerr << "warning: " << e.what() << ", skipping\n";
        continue;
      }
      SweepOutputs sweep = multi_output_sweep(input, model, icfg);

      auto add = [&](const std::string& method, const Volume& v) {
        result.subject_rows.push_back(
            {subject, level, method, psnr(label, v), nrmse(label, v)});
      };
      add("input", input);
      for (int i = 0; i < kNumLevels; ++i) add(count_level_label(kCountLevels[i]), sweep.nets[i]);
      add("UNN_ws", sweep.ws);
      add("UNN_out", sweep.out);
    }
  }
  if (result.subject_rows.empty())
    throw DataError("evaluate: no (subject, level) pairs could be evaluated");

  for (const std::string& method : evaluation_methods())
    for (double level : kCountLevels) {
      double psnr_sum = 0, nrmse_sum = 0;
      int n = 0;
      for (const auto& r : result.subject_rows)
        if (r.method == method && std::abs(r.count_level - level) < 1e-9) {
          psnr_sum += r.psnr_db;
          nrmse_sum += r.nrmse;
          n += 1;
        }
      if (n > 0)
        result.mean_rows.push_back({"mean", level, method, psnr_sum / n, nrmse_sum / n});
    }

  std::string csv = metric_csv_header() + "\n";
  for (const auto& r : result.subject_rows) csv += metric_csv_row(r) + "\n";
  for (const auto& r : result.mean_rows) csv += metric_csv_row(r) + "\n";
  atomic_write_text(out_csv, csv);
  return result;
}

std::string format_summary_grid(const std::vector<MetricReport>& mean_rows) {
  std::string out = "PSNR/NRMSE      ";
  for (double level : kCountLevels) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%18s%% ", format_count_level(level * 100).c_str());
    out += buf;
  }
  out += "\n";
  for (const std::string& method : evaluation_methods()) {
    char name[32];
    std::snprintf(name, sizeof(name), "%-16s", method.c_str());
    out += name;
    for (double level : kCountLevels) {
      std::string cell = "-";
      for (const auto& r : mean_rows)
        if (r.method == method && std::abs(r.count_level - level) < 1e-9)
          cell = format_metric(r.psnr_db) + "/" + format_metric(r.nrmse);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%19s ", cell.c_str());
      out += buf;
    }
    out += "\n";
  }
  return out;
}

WeightReport report_weights(const DatasetManifest& manifest,
                            const std::vector<std::string>& subjects,
                            const UnnModel<float>& model, const InferenceConfig& icfg,
                            const fs::path& out_csv) {
  WeightReport report;
  report.csv_path = out_csv;

  for (const auto& subject : subjects) {
    for (double level : kCountLevels) {
      auto row = manifest.find(subject, level);
      if (!row) {
        std::cerr << "warning: missing " << format_count_level(level) << " volume for "
                  << subject << ", skipping\n";
        continue;
      }
      Volume input = load_volume(manifest.resolve(*row));
      const auto offsets = slab_offsets(input.dims[0], icfg);
      const std::int64_t H = input.dims[1], W = input.dims[2];
      const std::int64_t slab_elems = icfg.patch_depth * H * W;

      std::array<double, 6> mean{};
      for (const std::int64_t off : offsets) {
        TensorT<float> slab({1, 1, icfg.patch_depth, H, W});
        std::copy(input.data.begin() + off * H * W,
                  input.data.begin() + off * H * W + slab_elems, slab.data().begin());
        WeightVector wv = to_weight_vector(noise_aware_forward(slab, model.gating));
        for (int i = 0; i < kNumLevels; ++i) mean[i] += wv.w[i];
      }
      for (auto& v : mean) v /= static_cast<double>(offsets.size());
      report.rows.push_back({subject, level, mean});
    }
  }
  if (report.rows.empty()) throw DataError("report_weights: nothing to report");

  // Per-level mean and population standard deviation across subjects.
  std::vector<WeightReportRow> stats;
  for (double level : kCountLevels) {
    std::array<double, 6> mu{}, var{};
    int n = 0;
    for (const auto& r : report.rows)
      if (r.subject != "mean" && r.subject != "std" &&
          std::abs(r.count_level - level) < 1e-9) {
        for (int i = 0; i < kNumLevels; ++i) mu[i] += r.w[i];
        n += 1;
      }
    if (n == 0) continue;
    for (auto& v : mu) v /= n;
    for (const auto& r : report.rows)
      if (std::abs(r.count_level - level) < 1e-9)
        for (int i = 0; i < kNumLevels; ++i) var[i] += (r.w[i] - mu[i]) * (r.w[i] - mu[i]);
    for (auto& v : var) v = std::sqrt(v / n);
    stats.push_back({"mean", level, mu});
    stats.push_back({"std", level, var});
  }
  report.rows.insert(report.rows.end(), stats.begin(), stats.end());

  std::string csv = "subject,count_level,w1,w2,w3,w4,w5,w6\n";
  for (const auto& r : report.rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.8f,%.8f,%.8f,%.8f,%.8f,%.8f\n",
                  r.subject.c_str(), format_count_level(r.count_level).c_str(), r.w[0],
                  r.w[1], r.w[2], r.w[3], r.w[4], r.w[5]);
    csv += buf;
  }
  atomic_write_text(out_csv, csv);
  return report;
}

}  // namespace unn

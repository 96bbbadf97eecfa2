#include "unn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace unn {

namespace {

void check_pair(const Volume& reference, const Volume& test) {
  if (reference.dims != test.dims)
    throw ShapeError("metric: volume dims mismatch");
}

}  // namespace

double psnr(const Volume& reference, const Volume& test) {
  check_pair(reference, test);
  double peak = 0, mse = 0;
  const std::int64_t n = reference.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    peak = std::max(peak, static_cast<double>(reference.data[i]));
    const double d = static_cast<double>(test.data[i]) - reference.data[i];
    mse += d * d;
  }
  if (peak <= 0) throw DataError("psnr: reference volume has no positive voxels");
  mse /= static_cast<double>(n);
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double nrmse(const Volume& reference, const Volume& test) {
  check_pair(reference, test);
  double num = 0, den = 0;
  const std::int64_t n = reference.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const double r = reference.data[i];
    const double d = static_cast<double>(test.data[i]) - r;
    num += d * d;
    den += r * r;
  }
  if (den <= 0) throw DataError("nrmse: reference volume has zero norm");
  return std::sqrt(num / den);
}

std::string metric_csv_header() { return "subject,count_level,method,psnr_db,nrmse"; }

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string metric_csv_row(const MetricReport& r) {
  char lvl[32];
  std::snprintf(lvl, sizeof(lvl), "%.2f", r.count_level);
  return r.subject + "," + lvl + "," + r.method + "," + format_metric(r.psnr_db) + "," +
         format_metric(r.nrmse);
}

}  // namespace unn

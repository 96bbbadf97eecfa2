#pragma once

#include <string>
#include <vector>

#include "unn/volume.hpp"

namespace unn {

// Whole-volume peak signal-to-noise ratio in dB against a reference.
// Identical volumes report +infinity.
double psnr(const Volume& reference, const Volume& test);

// Whole-volume L2-norm ratio ||test - reference|| / ||reference||.
double nrmse(const Volume& reference, const Volume& test);

struct MetricReport {
  std::string subject;
  double count_level = 0;
  std::string method;
  double psnr_db = 0;
  double nrmse = 0;
};

// CSV columns: subject,count_level,method,psnr_db,nrmse
std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& r);
std::string format_metric(double v);  // "inf" for the identical-volume sentinel

}  // namespace unn

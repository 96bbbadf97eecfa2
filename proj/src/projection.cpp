#include "unn/projection.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

namespace unn {

double Sinogram::total() const {
  double t = 0;
  for (double v : counts) t += v;
  return t;
}

std::vector<int> all_angles(const ProjectionGeometry& geom) {
  std::vector<int> a(static_cast<std::size_t>(geom.n_angles));
  std::iota(a.begin(), a.end(), 0);
  return a;
}

namespace {

// Walks every (ray sample, bilinear tap) pair for one slice/angle and hands
// (pixel index, weight, bin) to the sink. Projection and backprojection use
// the same enumeration, which makes them exact adjoints.
template <typename Sink>
void sweep_rays(std::int64_t h, std::int64_t w, const ProjectionGeometry& geom, int angle,
                Sink&& sink) {
  const double theta = M_PI * static_cast<double>(angle) / geom.n_angles;
  const double ny = std::cos(theta), nx = std::sin(theta);   // bin offset direction
  const double uy = -std::sin(theta), ux = std::cos(theta);  // ray direction
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double diag = std::sqrt(static_cast<double>(h * h + w * w));
  const std::int64_t n_steps = static_cast<std::int64_t>(std::ceil(diag / geom.step_vox)) + 1;
  const double t0 = -0.5 * (n_steps - 1) * geom.step_vox;
  const double bin0 = -(geom.n_bins - 1) / 2.0;

  for (std::int64_t b = 0; b < geom.n_bins; ++b) {
    const double r = bin0 + b;
    const double oy = cy + r * ny, ox = cx + r * nx;
    for (std::int64_t j = 0; j < n_steps; ++j) {
      const double t = t0 + j * geom.step_vox;
      const double y = oy + t * uy, x = ox + t * ux;
      const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
      const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
      const double fy = y - y0, fx = x - x0;
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
      const double w10 = fy * (1 - fx), w11 = fy * fx;
      if (y0 >= 0 && y0 < h && x0 >= 0 && x0 < w) sink(y0 * w + x0, w00 * geom.step_vox, b);
      if (y0 >= 0 && y0 < h && x0 + 1 >= 0 && x0 + 1 < w)
        sink(y0 * w + x0 + 1, w01 * geom.step_vox, b);
      if (y0 + 1 >= 0 && y0 + 1 < h && x0 >= 0 && x0 < w)
        sink((y0 + 1) * w + x0, w10 * geom.step_vox, b);
      if (y0 + 1 >= 0 && y0 + 1 < h && x0 + 1 >= 0 && x0 + 1 < w)
        sink((y0 + 1) * w + x0 + 1, w11 * geom.step_vox, b);
    }
  }
}

}  // namespace

void project_slices(const double* img, std::int64_t n_slices, std::int64_t h, std::int64_t w,
                    const ProjectionGeometry& geom, const std::vector<int>& angles,
                    double* sino_out) {
  geom.validate();
  const std::int64_t na = static_cast<std::int64_t>(angles.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::int64_t s = 0; s < n_slices; ++s) {
    const double* slice = img + s * h * w;
    for (std::int64_t ai = 0; ai < na; ++ai) {
      double* row = sino_out + (s * na + ai) * geom.n_bins;
      std::memset(row, 0, sizeof(double) * geom.n_bins);
      sweep_rays(h, w, geom, angles[ai],
                 [&](std::int64_t pix, double wgt, std::int64_t bin) {
                   row[bin] += wgt * slice[pix];
                 });
    }
  }
}

void backproject_slices(const double* sino, std::int64_t n_slices, std::int64_t h,
                        std::int64_t w, const ProjectionGeometry& geom,
                        const std::vector<int>& angles, double* img_out) {
  geom.validate();
  const std::int64_t na = static_cast<std::int64_t>(angles.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::int64_t s = 0; s < n_slices; ++s) {
    double* slice = img_out + s * h * w;
    std::memset(slice, 0, sizeof(double) * h * w);
    for (std::int64_t ai = 0; ai < na; ++ai) {
      const double* row = sino + (s * na + ai) * geom.n_bins;
      sweep_rays(h, w, geom, angles[ai],
                 [&](std::int64_t pix, double wgt, std::int64_t bin) {
                   slice[pix] += wgt * row[bin];
                 });
    }
  }
}

Sinogram forward_project(const Volume& v, const ProjectionGeometry& geom) {
  geom.validate();
  v.validate();
  Sinogram s;
  s.n_slices = v.dims[0];
  s.n_angles = geom.n_angles;
  s.n_bins = geom.n_bins;
  s.img_h = v.dims[1];
  s.img_w = v.dims[2];
  s.voxel_size_mm = v.voxel_size_mm;
  s.step_vox = geom.step_vox;
  s.subject_id = v.subject_id;
  s.counts.assign(static_cast<std::size_t>(s.n_slices * s.n_angles * s.n_bins), 0.0);
  std::vector<double> img(v.data.begin(), v.data.end());
  project_slices(img.data(), s.n_slices, s.img_h, s.img_w, geom, all_angles(geom),
                 s.counts.data());
  return s;
}

}  // namespace unn

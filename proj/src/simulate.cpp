#include "unn/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

namespace unn {

namespace fs = std::filesystem;

Sinogram poisson_sample(const Sinogram& expected, double total_counts_target, Rng& rng,
                        double* applied_scale) {
  if (total_counts_target <= 0)
    throw ConfigError("poisson_sample: total_counts_target must be > 0");
  const double mass = expected.total();
  if (mass <= 0) throw DataError("poisson_sample: zero-mass sinogram");
  const double scale = total_counts_target / mass;
  if (applied_scale) *applied_scale = scale;
  Sinogram out = expected;
  for (auto& v : out.counts) {
    if (v < 0) throw DataError("poisson_sample: negative expected count");
    v = v == 0 ? 0.0 : static_cast<double>(rng.poisson(v * scale));
  }
  return out;
}

Sinogram thin_counts(const Sinogram& full, double fraction, Rng& rng) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ConfigError("thin_counts: fraction must lie in [0,1]");
  Sinogram out = full;
  if (fraction == 1.0) return out;
  for (auto& v : out.counts) {
    if (v < 0 || v != std::floor(v))
      throw DataError("thin_counts: input bins must hold non-negative integer counts");
    v = static_cast<double>(rng.binomial(static_cast<long>(v), fraction));
  }
  return out;
}

double fwhm_to_sigma_vox(double fwhm_mm, double voxel_size_mm) {
  return fwhm_mm / (2.0 * std::sqrt(2.0 * std::log(2.0))) / voxel_size_mm;
}

namespace {

// 1-D Gaussian pass with edge-inclusive reflection (-1 -> 0, n -> n-1), which
// keeps the total mass of a normalized kernel exact.
void gauss_1d(const std::vector<double>& in, std::vector<double>& out, std::int64_t n,
              std::int64_t stride, std::int64_t lines, std::int64_t line_stride,
              double sigma) {
  const std::int64_t radius = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(4.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (std::int64_t i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;

  for (std::int64_t ln = 0; ln < lines; ++ln) {
    const double* src = in.data() + ln * line_stride;
    double* dst = out.data() + ln * line_stride;
    for (std::int64_t i = 0; i < n; ++i) {
      double acc = 0;
      for (std::int64_t j = -radius; j <= radius; ++j) {
        std::int64_t idx = i + j;
        if (idx < 0) idx = -idx - 1;
        if (idx >= n) idx = 2 * n - 1 - idx;
        acc += k[j + radius] * src[idx * stride];
      }
      dst[i * stride] = acc;
    }
  }
}

std::vector<double> smooth_axis(const std::vector<double>& img,
                                const std::array<std::int64_t, 3>& dims, int axis,
                                double sigma) {
  const std::int64_t D = dims[0], H = dims[1], W = dims[2];
  std::vector<double> out(img.size());
  if (axis == 2) {  // W: contiguous lines
    gauss_1d(img, out, W, 1, D * H, W, sigma);
  } else if (axis == 1) {  // H: stride W, one line per (d, w); process per slice
    for (std::int64_t d = 0; d < D; ++d)
      for (std::int64_t w = 0; w < W; ++w) {
        // strided line starting at (d,0,w)
        std::vector<double> line(static_cast<std::size_t>(H)), res(static_cast<std::size_t>(H));
        for (std::int64_t h = 0; h < H; ++h) line[h] = img[(d * H + h) * W + w];
        gauss_1d(line, res, H, 1, 1, 0, sigma);
        for (std::int64_t h = 0; h < H; ++h) out[(d * H + h) * W + w] = res[h];
      }
  } else {  // D
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t w = 0; w < W; ++w) {
        std::vector<double> line(static_cast<std::size_t>(D)), res(static_cast<std::size_t>(D));
        for (std::int64_t d = 0; d < D; ++d) line[d] = img[(d * H + h) * W + w];
        gauss_1d(line, res, D, 1, 1, 0, sigma);
        for (std::int64_t d = 0; d < D; ++d) out[(d * H + h) * W + w] = res[d];
      }
  }
  return out;
}

}  // namespace

Volume gaussian_postfilter(const Volume& v, double fwhm_mm) {
  if (fwhm_mm < 0) throw ConfigError("gaussian_postfilter: fwhm must be >= 0");
  if (fwhm_mm == 0) return v;
  std::vector<double> img(v.data.begin(), v.data.end());
  for (int axis = 0; axis < 3; ++axis) {
    const double sigma = fwhm_to_sigma_vox(fwhm_mm, v.voxel_size_mm[axis]);
    if (sigma > 0) img = smooth_axis(img, v.dims, axis, sigma);
  }
  Volume out = v;
  for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = static_cast<float>(img[i]);
  return out;
}

Volume osem_reconstruct(const Sinogram& s, const ReconConfig& cfg,
                        const OsemObserver& observer) {
  ProjectionGeometry geom;
  geom.n_angles = static_cast<int>(s.n_angles);
  geom.n_bins = static_cast<int>(s.n_bins);
  geom.step_vox = s.step_vox;
  cfg.validate(geom.n_angles);
  for (double v : s.counts)
    if (v < 0) throw DataError("osem: negative counts");

  const std::int64_t D = s.n_slices, H = s.img_h, W = s.img_w;
  const std::int64_t nvox = D * H * W;

  // Interleaved angle subsets and their sensitivity images.
  std::vector<std::vector<int>> subsets(static_cast<std::size_t>(cfg.subsets));
  for (int a = 0; a < geom.n_angles; ++a) subsets[a % cfg.subsets].push_back(a);
  std::vector<std::vector<double>> sens(subsets.size());
  {
    std::vector<double> ones;
    for (std::size_t si = 0; si < subsets.size(); ++si) {
      ones.assign(static_cast<std::size_t>(D * static_cast<std::int64_t>(subsets[si].size()) *
                                           geom.n_bins),
                  1.0);
      sens[si].assign(static_cast<std::size_t>(nvox), 0.0);
      backproject_slices(ones.data(), D, H, W, geom, subsets[si], sens[si].data());
    }
  }

  std::vector<double> x(static_cast<std::size_t>(nvox), 1.0);
  std::vector<double> fp, ratio, corr(static_cast<std::size_t>(nvox));
  constexpr double kProjFloor = 1e-12;  // bins the model cannot see contribute 0
  constexpr double kSensFloor = 1e-12;

  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t si = 0; si < subsets.size(); ++si) {
      const auto& angles = subsets[si];
      const std::int64_t na = static_cast<std::int64_t>(angles.size());
      fp.assign(static_cast<std::size_t>(D * na * geom.n_bins), 0.0);
      project_slices(x.data(), D, H, W, geom, angles, fp.data());
      ratio.assign(fp.size(), 0.0);
      for (std::int64_t sl = 0; sl < D; ++sl)
        for (std::int64_t ai = 0; ai < na; ++ai)
          for (std::int64_t b = 0; b < geom.n_bins; ++b) {
            const std::size_t fi = static_cast<std::size_t>((sl * na + ai) * geom.n_bins + b);
            const double model = fp[fi];
            const double meas = s.at(sl, angles[ai], b);
            ratio[fi] = model > kProjFloor ? meas / model : 0.0;
          }
      backproject_slices(ratio.data(), D, H, W, geom, angles, corr.data());
      for (std::int64_t i = 0; i < nvox; ++i)
        x[i] = sens[si][i] > kSensFloor ? x[i] * corr[i] / sens[si][i] : 0.0;
      if (observer) observer(it, static_cast<int>(si), x);
    }
  }

  Volume out;
  out.dims = {D, H, W};
  out.voxel_size_mm = s.voxel_size_mm;
  out.subject_id = s.subject_id;
  out.count_level = 1.0;
  out.data.resize(static_cast<std::size_t>(nvox));
  for (std::int64_t i = 0; i < nvox; ++i) out.data[i] = static_cast<float>(x[i]);
  return gaussian_postfilter(out, cfg.postfilter_fwhm_mm);
}

DatasetManifest build_dataset(const SimConfig& cfg) {
  if (cfg.n_subjects < 1) throw ConfigError("build_dataset: n_subjects must be >= 1");
  cfg.recon.validate(cfg.geometry.n_angles);
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (!fs::is_directory(cfg.out_dir))
    throw DataError("build_dataset: cannot create output directory " + cfg.out_dir.string());

  DatasetManifest manifest;
  manifest.manifest_path = cfg.out_dir / "manifest.csv";
  std::vector<std::vector<ManifestRow>> per_subject(static_cast<std::size_t>(cfg.n_subjects));

  Rng base(cfg.seed);
  const int jobs = std::max(1, cfg.jobs);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
#endif
  for (int subj = 0; subj < cfg.n_subjects; ++subj) {
    char sid[16];
    std::snprintf(sid, sizeof(sid), "s%03d", subj);

    PhantomSpec spec = cfg.phantom;
    spec.seed = base.fork(static_cast<std::uint64_t>(subj)).next_u64();
    Volume phantom = generate_phantom(spec);
    phantom.subject_id = sid;

    Sinogram expected = forward_project(phantom, cfg.geometry);
    double scale = 1.0;
    Rng noise_rng = base.fork(0x1000 + static_cast<std::uint64_t>(subj));
    Sinogram full = poisson_sample(expected, cfg.full_counts, noise_rng, &scale);

    for (double f : kDatasetLevels) {
      Rng thin_rng = base.fork(0x2000 + static_cast<std::uint64_t>(subj) * 16 +
                               static_cast<std::uint64_t>(f * 1000));
      Sinogram thinned = thin_counts(full, f, thin_rng);
      Volume recon = osem_reconstruct(thinned, cfg.recon);
      // Count-rate normalization: put every level on the phantom's scale.
      const double norm = 1.0 / (scale * f);
      for (auto& v : recon.data) v = static_cast<float>(v * norm);
      recon.subject_id = sid;
      recon.count_level = f;

      const std::string stem = std::string(sid) + "_cl" + format_count_level(f);
      save_volume(recon, cfg.out_dir / (stem + ".hdr"));
      per_subject[subj].push_back(
          {sid, f, stem + ".hdr", f == 1.0 ? "label" : "input"});
    }
  }
  for (auto& rows : per_subject)
    manifest.rows.insert(manifest.rows.end(), rows.begin(), rows.end());
  save_manifest(manifest, manifest.manifest_path);
  return manifest;
}

}  // namespace unn

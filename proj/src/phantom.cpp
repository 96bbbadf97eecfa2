#include "unn/phantom.hpp"

#include <cmath>

#include "unn/rng.hpp"

namespace unn {

namespace {

void check_inside(const std::array<double, 3>& center, const std::array<double, 3>& halfwidth,
                  const std::array<std::int64_t, 3>& grid, const char* what) {
  for (int a = 0; a < 3; ++a)
    if (center[a] - halfwidth[a] < -0.5 || center[a] + halfwidth[a] > grid[a] - 0.5)
      throw ConfigError(std::string("phantom: ") + what + " extends outside the grid on axis " +
                        std::to_string(a));
}

void rasterize_ellipsoid(Volume& v, const EllipsoidSpec& e) {
  const auto& g = v.dims;
  for (std::int64_t d = 0; d < g[0]; ++d)
    for (std::int64_t h = 0; h < g[1]; ++h)
      for (std::int64_t w = 0; w < g[2]; ++w) {
        const double zd = (d - e.center[0]) / e.semi_axes[0];
        const double yd = (h - e.center[1]) / e.semi_axes[1];
        const double xd = (w - e.center[2]) / e.semi_axes[2];
        if (zd * zd + yd * yd + xd * xd <= 1.0)
          v.at(d, h, w) = static_cast<float>(e.intensity);
      }
}

}  // namespace

void PhantomSpec::validate() const {
  for (auto e : grid)
    if (e < 1) throw ConfigError("phantom: grid extents must be >= 1");
  if (body) {
    if (body->intensity < 0) throw ConfigError("phantom: body intensity must be >= 0");
    check_inside(body->center, body->semi_axes, grid, "body ellipsoid");
  }
  for (const auto& o : organs) {
    if (o.intensity < 0) throw ConfigError("phantom: organ intensity must be >= 0");
    check_inside(o.center, o.semi_axes, grid, "organ ellipsoid");
  }
  for (const auto& s : spheres) {
    if (s.contrast < 0) throw ConfigError("phantom: sphere contrast must be >= 0");
    check_inside(s.center, {s.radius, s.radius, s.radius}, grid, "sphere");
  }
}

Volume generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  auto jitter_center = [&](std::array<double, 3> c) {
    for (auto& x : c) x += rng.uniform(-spec.center_jitter_vox, spec.center_jitter_vox);
    return c;
  };
  auto jitter_intensity = [&](double v) {
    return v * rng.uniform(1.0 - spec.intensity_jitter, 1.0 + spec.intensity_jitter);
  };

  Volume v;
  v.dims = spec.grid;
  v.voxel_size_mm = spec.voxel_size_mm;
  v.count_level = 1.0;
  v.data.assign(static_cast<std::size_t>(v.numel()), 0.0f);

  double body_intensity = 0.0;
  if (spec.body) {
    EllipsoidSpec b = *spec.body;
    b.center = jitter_center(b.center);
    b.intensity = jitter_intensity(b.intensity);
    body_intensity = b.intensity;
    rasterize_ellipsoid(v, b);
  }
  for (const auto& organ : spec.organs) {
    EllipsoidSpec o = organ;
    o.center = jitter_center(o.center);
    o.intensity = jitter_intensity(o.intensity);
    rasterize_ellipsoid(v, o);
  }
  for (const auto& sphere : spec.spheres) {
    SphereSpec s = sphere;
    s.center = jitter_center(s.center);
    EllipsoidSpec e{s.center, {s.radius, s.radius, s.radius},
                    jitter_intensity(body_intensity * s.contrast)};
    rasterize_ellipsoid(v, e);
  }
  return v;
}

PhantomSpec default_phantom_template(std::array<std::int64_t, 3> grid,
                                     std::array<double, 3> voxel_size_mm) {
  PhantomSpec spec;
  spec.grid = grid;
  spec.voxel_size_mm = voxel_size_mm;
  const double D = static_cast<double>(grid[0]);
  const double H = static_cast<double>(grid[1]);
  const double W = static_cast<double>(grid[2]);
  const std::array<double, 3> c{(D - 1) / 2, (H - 1) / 2, (W - 1) / 2};

  spec.body = EllipsoidSpec{c, {0.46 * D, 0.38 * H, 0.42 * W}, 1.0};
  spec.organs = {
      // liver-like lobe, a lung-like cold region, a small hot organ
      {{c[0], c[1] - 0.12 * H, c[2] + 0.15 * W}, {0.30 * D, 0.16 * H, 0.18 * W}, 1.8},
      {{c[0] + 0.10 * D, c[1] + 0.10 * H, c[2] - 0.16 * W}, {0.22 * D, 0.14 * H, 0.13 * W}, 0.35},
      {{c[0] - 0.14 * D, c[1] + 0.14 * H, c[2] + 0.02 * W}, {0.10 * D, 0.09 * H, 0.09 * W}, 2.6},
  };
  spec.spheres = {
      {{c[0] + 0.18 * D, c[1] - 0.05 * H, c[2] - 0.02 * W}, 0.055 * W, 4.0},
      {{c[0] - 0.10 * D, c[1] - 0.18 * H, c[2] - 0.12 * W}, 0.040 * W, 3.0},
      {{c[0], c[1] + 0.02 * H, c[2] + 0.22 * W}, 0.050 * W, 0.15},
  };
  spec.center_jitter_vox = 1.5;
  spec.intensity_jitter = 0.12;
  return spec;
}

}  // namespace unn

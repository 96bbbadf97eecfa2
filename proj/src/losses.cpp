#include "unn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "unn/ops.hpp"

namespace unn {

namespace {

const char* axis_name(SliceAxis a) {
  switch (a) {
    case SliceAxis::Axial: return "axial (D)";
    case SliceAxis::Coronal: return "coronal (H)";
    default: return "sagittal (W)";
  }
}

// Window orientation for a slicing axis: slices along D use an (1,w,w)
// window, along H a (w,1,w) window, along W a (w,w,1) window. Averaging the
// resulting valid-window map equals averaging per-slice SSIM means because
// every slice holds the same number of windows.
std::array<std::int64_t, 3> window_extents(SliceAxis axis, std::int64_t w) {
  switch (axis) {
    case SliceAxis::Axial: return {1, w, w};
    case SliceAxis::Coronal: return {w, 1, w};
    default: return {w, w, 1};
  }
}

}  // namespace

template <typename T>
TensorT<T> mae_loss(const TensorT<T>& label, const TensorT<T>& output, std::type_identity_t<Tape<T>>* tape) {
  if (label.shape() != output.shape())
    throw ShapeError("mae_loss: shape mismatch " + shape_to_string(label.shape()) + " vs " +
                     shape_to_string(output.shape()));
  return mean_all(abs_val(sub(label, output, tape), tape), tape);
}

template <typename T>
TensorT<T> ssim_axis(const TensorT<T>& a, const TensorT<T>& b, SliceAxis axis,
                     const SsimParams& p, std::type_identity_t<Tape<T>>* tape) {
  p.validate();
  if (a.rank() != 5 || a.extent(1) != 1)
    throw ShapeError("ssim_axis: inputs must be [N,1,D,H,W]");
  if (a.shape() != b.shape())
    throw ShapeError("ssim_axis: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  const auto wext = window_extents(axis, p.window);
  const std::int64_t sp[3] = {a.extent(2), a.extent(3), a.extent(4)};
  for (int ax = 0; ax < 3; ++ax)
    if (wext[ax] > 1 && sp[ax] < wext[ax])
      throw ShapeError(std::string("ssim_axis: slices along the ") + axis_name(axis) +
                       " axis are smaller than the " + std::to_string(p.window) + "x" +
                       std::to_string(p.window) + " window");

  ConvSpec spec;
  spec.kernel = wext;
  spec.in_channels = 1;
  spec.out_channels = 1;
  const std::int64_t taps = wext[0] * wext[1] * wext[2];
  TensorT<T> win = TensorT<T>::full({1, 1, wext[0], wext[1], wext[2]},
                                    static_cast<T>(1.0 / static_cast<double>(taps)));
  TensorT<T> b0({1});

  auto wmean = [&](const TensorT<T>& t) { return conv3d(t, win, b0, spec, tape); };

  TensorT<T> mu_a = wmean(a);
  TensorT<T> mu_b = wmean(b);
  TensorT<T> e_aa = wmean(mul(a, a, tape));
  TensorT<T> e_bb = wmean(mul(b, b, tape));
  TensorT<T> e_ab = wmean(mul(a, b, tape));
  TensorT<T> var_a = sub(e_aa, mul(mu_a, mu_a, tape), tape);
  TensorT<T> var_b = sub(e_bb, mul(mu_b, mu_b, tape), tape);
  TensorT<T> cov = sub(e_ab, mul(mu_a, mu_b, tape), tape);

  const T c1 = static_cast<T>(p.c1());
  const T c2 = static_cast<T>(p.c2());
  TensorT<T> num = mul(add_scalar(mul_scalar(mul(mu_a, mu_b, tape), T(2), tape), c1, tape),
                       add_scalar(mul_scalar(cov, T(2), tape), c2, tape), tape);
  TensorT<T> den =
      mul(add_scalar(add(mul(mu_a, mu_a, tape), mul(mu_b, mu_b, tape), tape), c1, tape),
          add_scalar(add(var_a, var_b, tape), c2, tape), tape);
  return mean_all(divide(num, den, tape), tape);
}

template <typename T>
TensorT<T> ssim_map(const TensorT<T>& a, const TensorT<T>& b, const SsimParams& p,
                    std::type_identity_t<Tape<T>>* tape) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("ssim_map: inputs must be 2-D slices");
  if (a.shape() != b.shape()) throw ShapeError("ssim_map: shape mismatch");
  if (a.extent(0) < p.window || a.extent(1) < p.window)
    throw ShapeError("ssim_map: slice " + shape_to_string(a.shape()) +
                     " smaller than the SSIM window");
  TensorT<T> a5 = reshape(a, {1, 1, 1, a.extent(0), a.extent(1)}, tape);
  TensorT<T> b5 = reshape(b, {1, 1, 1, b.extent(0), b.extent(1)}, tape);
  return ssim_axis(a5, b5, SliceAxis::Axial, p, tape);
}

template <typename T>
TensorT<T> ssim_3axis(const TensorT<T>& a, const TensorT<T>& b, const SsimParams& p,
                      std::type_identity_t<Tape<T>>* tape) {
  TensorT<T> s = add(ssim_axis(a, b, SliceAxis::Axial, p, tape),
                     add(ssim_axis(a, b, SliceAxis::Coronal, p, tape),
                         ssim_axis(a, b, SliceAxis::Sagittal, p, tape), tape),
                     tape);
  return mul_scalar(s, static_cast<T>(1.0 / 3.0), tape);
}

template <typename T>
TensorT<T> composite_loss(const TensorT<T>& label, const TensorT<T>& output,
                          const LossConfig& cfg, std::type_identity_t<Tape<T>>* tape) {
  cfg.validate();
  TensorT<T> mae = mae_loss(label, output, tape);
  TensorT<T> ssim = ssim_3axis(label, output, cfg.ssim, tape);
  TensorT<T> ssim_term = add_scalar(mul_scalar(ssim, T(-1), tape), T(1), tape);
  return add(mae, mul_scalar(ssim_term, static_cast<T>(cfg.lambda_a), tape), tape);
}

template <typename T>
TensorT<T> stage2_loss(const TensorT<T>& label, const TensorT<T>& out, const TensorT<T>& ws,
                       const LossConfig& cfg, std::type_identity_t<Tape<T>>* tape) {
  return add(composite_loss(label, out, cfg, tape), composite_loss(label, ws, cfg, tape),
             tape);
}

template <typename T>
double label_dynamic_range(const TensorT<T>& label) {
  T m = 0;
  for (T v : label.data()) m = std::max(m, v);
  // An all-zero (air) label would zero the stabilizers; keep R positive.
  return std::max(static_cast<double>(m), 1e-6);
}

#define UNN_INSTANTIATE_LOSSES(T)                                                         \
  template TensorT<T> mae_loss<T>(const TensorT<T>&, const TensorT<T>&, Tape<T>*);        \
  template TensorT<T> ssim_map<T>(const TensorT<T>&, const TensorT<T>&, const SsimParams&,\
                                  Tape<T>*);                                              \
  template TensorT<T> ssim_axis<T>(const TensorT<T>&, const TensorT<T>&, SliceAxis,       \
                                   const SsimParams&, Tape<T>*);                          \
  template TensorT<T> ssim_3axis<T>(const TensorT<T>&, const TensorT<T>&,                 \
                                    const SsimParams&, Tape<T>*);                         \
  template TensorT<T> composite_loss<T>(const TensorT<T>&, const TensorT<T>&,             \
                                        const LossConfig&, Tape<T>*);                     \
  template TensorT<T> stage2_loss<T>(const TensorT<T>&, const TensorT<T>&,                \
                                     const TensorT<T>&, const LossConfig&, Tape<T>*);     \
  template double label_dynamic_range<T>(const TensorT<T>&);

UNN_INSTANTIATE_LOSSES(float)
UNN_INSTANTIATE_LOSSES(double)

}  // namespace unn

#include "unn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace unn {

namespace {

template <typename T>
void check_rank5(const TensorT<T>& t, const char* what) {
  if (t.rank() != 5)
    throw ShapeError(std::string(what) + " must be 5-D (N,C,D,H,W), got " +
                     shape_to_string(t.shape()));
}

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
}

struct Dims5 {
  std::int64_t n, c, d, h, w;
  std::int64_t spatial() const { return d * h * w; }
  std::int64_t per_sample() const { return c * d * h * w; }
};

template <typename T>
Dims5 dims5(const TensorT<T>& t) {
  const auto& s = t.shape();
  return {s[0], s[1], s[2], s[3], s[4]};
}

// ---------------------------------------------------------------------------
// Shared conv kernels. conv3d's forward/gradients and tconv3d's
// forward/gradients are the same four index loops with swapped roles, so both
// ops call into these and the adjoint identity holds by construction.
// `shift` translates indices on the "image" side (used for tconv crop/pad).
//
// All loops write each output element from exactly one iteration of the
// parallel loop, so multithreaded results are bit-identical to serial ones.
// ---------------------------------------------------------------------------

// out[n][oc][od][oh][ow] (+)= sum_{ic,k} K[oc][ic][k] * img[n][ic][od*s+k-p+shift]
template <typename T>
void conv_fw_accum(T* out, const Dims5& od, const T* img, const Dims5& id,
                   const T* K, const ConvSpec& sp,
                   const std::array<std::int64_t, 3>& shift, bool accumulate) {
  const std::int64_t KD = sp.kernel[0], KH = sp.kernel[1], KW = sp.kernel[2];
  const std::int64_t SD = sp.stride[0], SH = sp.stride[1], SW = sp.stride[2];
  const std::int64_t PD = sp.padding[0], PH = sp.padding[1], PW = sp.padding[2];
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (std::int64_t n = 0; n < od.n; ++n) {
    for (std::int64_t oc = 0; oc < od.c; ++oc) {
      for (std::int64_t z = 0; z < od.d; ++z) {
        for (std::int64_t y = 0; y < od.h; ++y) {
          T* orow = out + (((n * od.c + oc) * od.d + z) * od.h + y) * od.w;
          if (!accumulate) std::memset(orow, 0, sizeof(T) * od.w);
          for (std::int64_t ic = 0; ic < id.c; ++ic) {
            for (std::int64_t kd = 0; kd < KD; ++kd) {
              const std::int64_t iz = z * SD + kd - PD + shift[0];
              if (iz < 0 || iz >= id.d) continue;
              for (std::int64_t kh = 0; kh < KH; ++kh) {
                const std::int64_t iy = y * SH + kh - PH + shift[1];
                if (iy < 0 || iy >= id.h) continue;
                const T* irow = img + (((n * id.c + ic) * id.d + iz) * id.h + iy) * id.w;
                const T* krow = K + (((oc * id.c + ic) * KD + kd) * KH + kh) * KW;
                if (SW == 1) {
                  for (std::int64_t kw = 0; kw < KW; ++kw) {
                    const std::int64_t base = kw - PW + shift[2];
                    const std::int64_t x0 = std::max<std::int64_t>(0, -base);
                    const std::int64_t x1 = std::min<std::int64_t>(od.w, id.w - base);
                    const T kv = krow[kw];
                    for (std::int64_t x = x0; x < x1; ++x) orow[x] += kv * irow[x + base];
                  }
                } else {
                  for (std::int64_t x = 0; x < od.w; ++x) {
                    T acc = 0;
                    for (std::int64_t kw = 0; kw < KW; ++kw) {
                      const std::int64_t ix = x * SW + kw - PW + shift[2];
                      if (ix >= 0 && ix < id.w) acc += krow[kw] * irow[ix];
                    }
                    orow[x] += acc;
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

// gin[n][ic][i] += sum_{oc,k} K[oc][ic][k] * gout[n][oc][o],  o = (i+shift+p-k)/s
template <typename T>
void conv_gin_accum(T* gin, const Dims5& id, const T* gout, const Dims5& od,
                    const T* K, const ConvSpec& sp,
                    const std::array<std::int64_t, 3>& shift) {
  const std::int64_t KD = sp.kernel[0], KH = sp.kernel[1], KW = sp.kernel[2];
  const std::int64_t SD = sp.stride[0], SH = sp.stride[1], SW = sp.stride[2];
  const std::int64_t PD = sp.padding[0], PH = sp.padding[1], PW = sp.padding[2];
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (std::int64_t n = 0; n < id.n; ++n) {
    for (std::int64_t ic = 0; ic < id.c; ++ic) {
      for (std::int64_t z = 0; z < id.d; ++z) {
        for (std::int64_t y = 0; y < id.h; ++y) {
          T* grow = gin + (((n * id.c + ic) * id.d + z) * id.h + y) * id.w;
          for (std::int64_t oc = 0; oc < od.c; ++oc) {
            for (std::int64_t kd = 0; kd < KD; ++kd) {
              const std::int64_t zn = z + shift[0] + PD - kd;
              if (zn < 0 || zn % SD != 0) continue;
              const std::int64_t oz = zn / SD;
              if (oz >= od.d) continue;
              for (std::int64_t kh = 0; kh < KH; ++kh) {
                const std::int64_t yn = y + shift[1] + PH - kh;
                if (yn < 0 || yn % SH != 0) continue;
                const std::int64_t oy = yn / SH;
                if (oy >= od.h) continue;
                const T* grout = gout + (((n * od.c + oc) * od.d + oz) * od.h + oy) * od.w;
                const T* krow = K + (((oc * id.c + ic) * KD + kd) * KH + kh) * KW;
                if (SW == 1) {
                  for (std::int64_t kw = 0; kw < KW; ++kw) {
                    const std::int64_t base = shift[2] + PW - kw;  // ox = x + base
                    const std::int64_t x0 = std::max<std::int64_t>(0, -base);
                    const std::int64_t x1 = std::min<std::int64_t>(id.w, od.w - base);
                    const T kv = krow[kw];
                    for (std::int64_t x = x0; x < x1; ++x) grow[x] += kv * grout[x + base];
                  }
                } else {
                  for (std::int64_t kw = 0; kw < KW; ++kw) {
                    const T kv = krow[kw];
                    for (std::int64_t x = 0; x < id.w; ++x) {
                      const std::int64_t xn = x + shift[2] + PW - kw;
                      if (xn < 0 || xn % SW != 0) continue;
                      const std::int64_t ox = xn / SW;
                      if (ox < od.w) grow[x] += kv * grout[ox];
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

// gK[oc][ic][k] += sum_{n,o} gout[n][oc][o] * img[n][ic][o*s+k-p+shift]
template <typename T>
void conv_gk_accum(T* gK, const T* img, const Dims5& id, const T* gout,
                   const Dims5& od, const ConvSpec& sp,
                   const std::array<std::int64_t, 3>& shift) {
  const std::int64_t KD = sp.kernel[0], KH = sp.kernel[1], KW = sp.kernel[2];
  const std::int64_t SD = sp.stride[0], SH = sp.stride[1], SW = sp.stride[2];
  const std::int64_t PD = sp.padding[0], PH = sp.padding[1], PW = sp.padding[2];
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::int64_t oc = 0; oc < od.c; ++oc) {
    for (std::int64_t n = 0; n < od.n; ++n) {
      for (std::int64_t ic = 0; ic < id.c; ++ic) {
        for (std::int64_t kd = 0; kd < KD; ++kd) {
          for (std::int64_t kh = 0; kh < KH; ++kh) {
            T* krow = gK + (((oc * id.c + ic) * KD + kd) * KH + kh) * KW;
            for (std::int64_t z = 0; z < od.d; ++z) {
              const std::int64_t iz = z * SD + kd - PD + shift[0];
              if (iz < 0 || iz >= id.d) continue;
              for (std::int64_t y = 0; y < od.h; ++y) {
                const std::int64_t iy = y * SH + kh - PH + shift[1];
                if (iy < 0 || iy >= id.h) continue;
                const T* grout = gout + (((n * od.c + oc) * od.d + z) * od.h + y) * od.w;
                const T* irow = img + (((n * id.c + ic) * id.d + iz) * id.h + iy) * id.w;
                if (SW == 1) {
                  for (std::int64_t kw = 0; kw < KW; ++kw) {
                    const std::int64_t base = kw - PW + shift[2];
                    const std::int64_t x0 = std::max<std::int64_t>(0, -base);
                    const std::int64_t x1 = std::min<std::int64_t>(od.w, id.w - base);
                    T acc = 0;
                    for (std::int64_t x = x0; x < x1; ++x) acc += grout[x] * irow[x + base];
                    krow[kw] += acc;
                  }
                } else {
                  for (std::int64_t kw = 0; kw < KW; ++kw) {
                    T acc = 0;
                    for (std::int64_t x = 0; x < od.w; ++x) {
                      const std::int64_t ix = x * SW + kw - PW + shift[2];
                      if (ix >= 0 && ix < id.w) acc += grout[x] * irow[ix];
                    }
                    krow[kw] += acc;
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

// gb[c] += sum over everything else of g[n][c][...]
template <typename T>
void channel_sum_accum(T* gb, const T* g, const Dims5& d) {
  for (std::int64_t n = 0; n < d.n; ++n)
    for (std::int64_t c = 0; c < d.c; ++c) {
      const T* base = g + (n * d.c + c) * d.spatial();
      T acc = 0;
      for (std::int64_t i = 0; i < d.spatial(); ++i) acc += base[i];
      gb[c] += acc;
    }
}

// Center crop/pad offset from natural extent to target; odd differences put
// the extra element on the high-index side.
inline std::int64_t center_offset(std::int64_t natural, std::int64_t target) {
  return natural >= target ? (natural - target) / 2 : -((target - natural) / 2);
}

}  // namespace

void ConvSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (kernel[a] < 1) throw ConfigError("conv kernel extent must be >= 1");
    if (stride[a] < 1) throw ConfigError("conv stride must be >= 1");
    if (padding[a] < 0) throw ConfigError("conv padding must be >= 0");
  }
  if (in_channels < 1 || out_channels < 1)
    throw ConfigError("conv channel counts must be >= 1");
}

// ---------------------------------------------------------------------------
// conv3d
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv3d(const TensorT<T>& input, const TensorT<T>& kernel,
                  const TensorT<T>& bias, const ConvSpec& spec, std::type_identity_t<Tape<T>>* tape) {
  spec.validate();
  check_rank5(input, "conv3d input");
  Dims5 id = dims5(input);
  if (id.c != spec.in_channels)
    throw ShapeError("conv3d: input has " + std::to_string(id.c) +
                     " channels, spec expects " + std::to_string(spec.in_channels));
  std::vector<std::int64_t> kshape = {spec.out_channels, spec.in_channels,
                                      spec.kernel[0], spec.kernel[1], spec.kernel[2]};
  if (kernel.shape() != kshape)
    throw ShapeError("conv3d: kernel shape " + shape_to_string(kernel.shape()) +
                     " does not match spec " + shape_to_string(kshape));
  if (bias.rank() != 1 || bias.extent(0) != spec.out_channels)
    throw ShapeError("conv3d: bias must be [out_channels]");

  Dims5 od{id.n, spec.out_channels, 0, 0, 0};
  const std::int64_t in_sp[3] = {id.d, id.h, id.w};
  std::int64_t out_sp[3];
  static const char* axis_name[3] = {"D", "H", "W"};
  for (int a = 0; a < 3; ++a) {
    out_sp[a] = spec.out_extent(a, in_sp[a]);
    if (out_sp[a] < 1)
      throw ConfigError(std::string("conv3d: zero-sized output on axis ") + axis_name[a] +
                        " (input extent " + std::to_string(in_sp[a]) + ", kernel " +
                        std::to_string(spec.kernel[a]) + ", stride " +
                        std::to_string(spec.stride[a]) + ")");
  }
  od.d = out_sp[0], od.h = out_sp[1], od.w = out_sp[2];

  TensorT<T> out({od.n, od.c, od.d, od.h, od.w});
  conv_fw_accum(out.raw(), od, input.raw(), id, kernel.raw(), spec, {0, 0, 0}, false);
  {
    T* o = out.raw();
    const T* b = bias.raw();
    for (std::int64_t n = 0; n < od.n; ++n)
      for (std::int64_t c = 0; c < od.c; ++c) {
        T* base = o + (n * od.c + c) * od.spatial();
        for (std::int64_t i = 0; i < od.spatial(); ++i) base[i] += b[c];
      }
  }

  const bool need = tape && (input.requires_grad() || kernel.requires_grad() ||
                             bias.requires_grad());
  if (need) {
    out.set_requires_grad(true);
    TensorT<T> x = input, k = kernel, b = bias, y = out;
    ConvSpec sp = spec;
    tape->record([x, k, b, y, sp, id, od]() mutable {
      if (x.requires_grad())
        conv_gin_accum(x.grad_raw(), id, y.grad_raw(), od, k.raw(), sp, {0, 0, 0});
      if (k.requires_grad())
        conv_gk_accum(k.grad_raw(), x.raw(), id, y.grad_raw(), od, sp, {0, 0, 0});
      if (b.requires_grad()) channel_sum_accum(b.grad_raw(), y.grad_raw(), od);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// tconv3d
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> tconv3d(const TensorT<T>& input, const TensorT<T>& kernel,
                   const TensorT<T>& bias, const ConvSpec& spec,
                   std::optional<std::array<std::int64_t, 3>> output_target,
                   std::type_identity_t<Tape<T>>* tape) {
  spec.validate();
  check_rank5(input, "tconv3d input");
  Dims5 yd = dims5(input);  // conv-output side
  if (yd.c != spec.out_channels)
    throw ShapeError("tconv3d: input has " + std::to_string(yd.c) +
                     " channels, spec expects " + std::to_string(spec.out_channels));
  std::vector<std::int64_t> kshape = {spec.out_channels, spec.in_channels,
                                      spec.kernel[0], spec.kernel[1], spec.kernel[2]};
  if (kernel.shape() != kshape)
    throw ShapeError("tconv3d: kernel shape " + shape_to_string(kernel.shape()) +
                     " does not match spec " + shape_to_string(kshape));
  if (bias.rank() != 1 || bias.extent(0) != spec.in_channels)
    throw ShapeError("tconv3d: bias must be [in_channels] (the output side)");

  const std::int64_t in_sp[3] = {yd.d, yd.h, yd.w};
  std::array<std::int64_t, 3> natural{}, target{}, shift{};
  for (int a = 0; a < 3; ++a) {
    natural[a] = spec.tconv_extent(a, in_sp[a]);
    if (natural[a] < 1)
      throw ConfigError("tconv3d: natural output extent < 1 on axis " + std::to_string(a));
    target[a] = output_target ? (*output_target)[a] : natural[a];
    if (target[a] < 1 || std::llabs(target[a] - natural[a]) > spec.stride[a] - 1)
      throw ConfigError("tconv3d: output_target " + std::to_string(target[a]) +
                        " unreachable from natural extent " + std::to_string(natural[a]) +
                        " with stride " + std::to_string(spec.stride[a]));
    shift[a] = center_offset(natural[a], target[a]);
  }

  Dims5 od{yd.n, spec.in_channels, target[0], target[1], target[2]};
  TensorT<T> out({od.n, od.c, od.d, od.h, od.w});
  conv_gin_accum(out.raw(), od, input.raw(), yd, kernel.raw(), spec, shift);
  {
    T* o = out.raw();
    const T* b = bias.raw();
    for (std::int64_t n = 0; n < od.n; ++n)
      for (std::int64_t c = 0; c < od.c; ++c) {
        T* base = o + (n * od.c + c) * od.spatial();
        for (std::int64_t i = 0; i < od.spatial(); ++i) base[i] += b[c];
      }
  }

  const bool need = tape && (input.requires_grad() || kernel.requires_grad() ||
                             bias.requires_grad());
  if (need) {
    out.set_requires_grad(true);
    TensorT<T> y = input, k = kernel, b = bias, z = out;
    ConvSpec sp = spec;
    std::array<std::int64_t, 3> neg{-shift[0], -shift[1], -shift[2]};
    tape->record([y, k, b, z, sp, yd, od, neg]() mutable {
      if (y.requires_grad())
        conv_fw_accum(y.grad_raw(), yd, z.grad_raw(), od, k.raw(), sp, neg, true);
      if (k.requires_grad())
        conv_gk_accum(k.grad_raw(), z.grad_raw(), od, y.grad_raw(), yd, sp, neg);
      if (b.requires_grad()) channel_sum_accum(b.grad_raw(), z.grad_raw(), od);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// fully connected / activations / pooling
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> fully_connected(const TensorT<T>& input, const TensorT<T>& weight,
                           const TensorT<T>& bias, std::type_identity_t<Tape<T>>* tape) {
  if (input.rank() != 2) throw ShapeError("fully_connected: input must be [N,F]");
  if (weight.rank() != 2) throw ShapeError("fully_connected: weight must be [F,G]");
  const std::int64_t N = input.extent(0), F = input.extent(1);
  const std::int64_t G = weight.extent(1);
  if (weight.extent(0) != F)
    throw ShapeError("fully_connected: input features " + std::to_string(F) +
                     " vs weight rows " + std::to_string(weight.extent(0)));
  if (bias.rank() != 1 || bias.extent(0) != G)
    throw ShapeError("fully_connected: bias must be [G]");

  TensorT<T> out({N, G});
  const T* x = input.raw();
  const T* w = weight.raw();
  const T* b = bias.raw();
  T* o = out.raw();
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t g = 0; g < G; ++g) o[n * G + g] = b[g];
    for (std::int64_t f = 0; f < F; ++f) {
      const T xv = x[n * F + f];
      const T* wrow = w + f * G;
      T* orow = o + n * G;
      for (std::int64_t g = 0; g < G; ++g) orow[g] += xv * wrow[g];
    }
  }

  const bool need = tape && (input.requires_grad() || weight.requires_grad() ||
                             bias.requires_grad());
  if (need) {
    out.set_requires_grad(true);
    TensorT<T> xi = input, wi = weight, bi = bias, y = out;
    tape->record([xi, wi, bi, y, N, F, G]() mutable {
      const T* gy = y.grad_raw();
      if (xi.requires_grad()) {
        T* gx = xi.grad_raw();
        const T* w = wi.raw();
        for (std::int64_t n = 0; n < N; ++n)
          for (std::int64_t f = 0; f < F; ++f) {
            T acc = 0;
            const T* wrow = w + f * G;
            const T* grow = gy + n * G;
            for (std::int64_t g = 0; g < G; ++g) acc += wrow[g] * grow[g];
            gx[n * F + f] += acc;
          }
      }
      if (wi.requires_grad()) {
        T* gw = wi.grad_raw();
        const T* x = xi.raw();
        for (std::int64_t n = 0; n < N; ++n)
          for (std::int64_t f = 0; f < F; ++f) {
            const T xv = x[n * F + f];
            T* gwrow = gw + f * G;
            const T* grow = gy + n * G;
            for (std::int64_t g = 0; g < G; ++g) gwrow[g] += xv * grow[g];
          }
      }
      if (bi.requires_grad()) {
        T* gb = bi.grad_raw();
        for (std::int64_t n = 0; n < N; ++n)
          for (std::int64_t g = 0; g < G; ++g) gb[g] += gy[n * G + g];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape) {
  TensorT<T> out(x.shape());
  const T* xi = x.raw();
  T* o = out.raw();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) o[i] = xi[i] > T(0) ? xi[i] : T(0);
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    TensorT<T> a = x, y = out;
    tape->record([a, y, n]() mutable {
      T* g = a.grad_raw();
      const T* xv = a.raw();
      const T* gy = y.grad_raw();
      for (std::int64_t i = 0; i < n; ++i)
        if (xv[i] > T(0)) g[i] += gy[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape) {
  TensorT<T> out(x.shape());
  const T* xi = x.raw();
  T* o = out.raw();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) o[i] = T(1) / (T(1) + std::exp(-xi[i]));
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    TensorT<T> a = x, y = out;
    tape->record([a, y, n]() mutable {
      T* g = a.grad_raw();
      const T* yv = y.raw();
      const T* gy = y.grad_raw();
      for (std::int64_t i = 0; i < n; ++i) g[i] += gy[i] * yv[i] * (T(1) - yv[i]);
    });
  }
  return out;
}

template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape) {
  if (x.rank() != 2) throw ShapeError("softmax_rows: input must be [N,K]");
  const std::int64_t N = x.extent(0), K = x.extent(1);
  TensorT<T> out({N, K});
  const T* xi = x.raw();
  T* o = out.raw();
  for (std::int64_t n = 0; n < N; ++n) {
    const T* row = xi + n * K;
    T* orow = o + n * K;
    T m = row[0];
    for (std::int64_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    T sum = 0;
    for (std::int64_t k = 0; k < K; ++k) {
      orow[k] = std::exp(row[k] - m);
      sum += orow[k];
    }
    for (std::int64_t k = 0; k < K; ++k) orow[k] /= sum;
  }
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    TensorT<T> a = x, y = out;
    tape->record([a, y, N, K]() mutable {
      T* g = a.grad_raw();
      const T* yv = y.raw();
      const T* gy = y.grad_raw();
      for (std::int64_t n = 0; n < N; ++n) {
        T dot = 0;
        for (std::int64_t k = 0; k < K; ++k) dot += gy[n * K + k] * yv[n * K + k];
        for (std::int64_t k = 0; k < K; ++k)
          g[n * K + k] += yv[n * K + k] * (gy[n * K + k] - dot);
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape) {
  check_rank5(x, "global_avg_pool input");
  Dims5 d = dims5(x);
  TensorT<T> out({d.n, d.c});
  const T* xi = x.raw();
  T* o = out.raw();
  const T inv = T(1) / static_cast<T>(d.spatial());
  for (std::int64_t n = 0; n < d.n; ++n)
    for (std::int64_t c = 0; c < d.c; ++c) {
      const T* base = xi + (n * d.c + c) * d.spatial();
      T acc = 0;
      for (std::int64_t i = 0; i < d.spatial(); ++i) acc += base[i];
      o[n * d.c + c] = acc * inv;
    }
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    TensorT<T> a = x, y = out;
    tape->record([a, y, d, inv]() mutable {
      T* g = a.grad_raw();
      const T* gy = y.grad_raw();
      for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t c = 0; c < d.c; ++c) {
          const T gv = gy[n * d.c + c] * inv;
          T* base = g + (n * d.c + c) * d.spatial();
          for (std::int64_t i = 0; i < d.spatial(); ++i) base[i] += gv;
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

template <typename T, typename Fwd, typename Bwd>
TensorT<T> binary_op(const char* name, const TensorT<T>& a, const TensorT<T>& b,
                     std::type_identity_t<Tape<T>>* tape, Fwd fwd, Bwd bwd) {
  check_same_shape(a, b, name);
  TensorT<T> out(a.shape());
  const T* av = a.raw();
  const T* bv = b.raw();
  T* o = out.raw();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) o[i] = fwd(av[i], bv[i]);
  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    TensorT<T> ta = a, tb = b, ty = out;
    tape->record([ta, tb, ty, n, bwd]() mutable {
      const T* gy = ty.grad_raw();
      const T* av = ta.raw();
      const T* bv = tb.raw();
      const T* yv = ty.raw();
      T* ga = ta.requires_grad() ? ta.grad_raw() : nullptr;
      T* gb = tb.requires_grad() ? tb.grad_raw() : nullptr;
      for (std::int64_t i = 0; i < n; ++i) bwd(av[i], bv[i], yv[i], gy[i], ga ? &ga[i] : nullptr, gb ? &gb[i] : nullptr);
    });
  }
  return out;
}

}  // namespace

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b, std::type_identity_t<Tape<T>>* tape) {
  return binary_op<T>(
      "add", a, b, tape, [](T x, T y) { return x + y; },
      [](T, T, T, T g, T* ga, T* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b, std::type_identity_t<Tape<T>>* tape) {
  return binary_op<T>(
      "sub", a, b, tape, [](T x, T y) { return x - y; },
      [](T, T, T, T g, T* ga, T* gb) {
        if (ga) *ga += g;
        if (gb) *gb -= g;
      });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b, std::type_identity_t<Tape<T>>* tape) {
  return binary_op<T>(
      "mul", a, b, tape, [](T x, T y) { return x * y; },
      [](T x, T y, T, T g, T* ga, T* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

template <typename T>
TensorT<T> divide(const TensorT<T>& a, const TensorT<T>& b, std::type_identity_t<Tape<T>>* tape) {
  return binary_op<T>(
      "divide", a, b, tape, [](T x, T y) { return x / y; },
      [](T, T y, T out, T g, T* ga, T* gb) {
        if (ga) *ga += g / y;
        if (gb) *gb -= g * out / y;
      });
}

template <typename T>
TensorT<T> eltmax(const TensorT<T>& a, const TensorT<T>& b, std::type_identity_t<Tape<T>>* tape) {
  return binary_op<T>(
      "eltmax", a, b, tape, [](T x, T y) { return x >= y ? x : y; },
      [](T x, T y, T, T g, T* ga, T* gb) {
        if (x >= y) {
          if (ga) *ga += g;
        } else {
          if (gb) *gb += g;
        }
      });
}

template <typename T>
TensorT<T> abs_val(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape) {
  TensorT<T> out(x.shape());
  const T* xi = x.raw();
  T* o = out.raw();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) o[i] = std::abs(xi[i]);
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    TensorT<T> a = x, y = out;
    tape->record([a, y, n]() mutable {
      T* g = a.grad_raw();
      const T* xv = a.raw();
      const T* gy = y.grad_raw();
      for (std::int64_t i = 0; i < n; ++i)
        g[i] += xv[i] > T(0) ? gy[i] : (xv[i] < T(0) ? -gy[i] : T(0));
    });
  }
  return out;
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& x, T c, std::type_identity_t<Tape<T>>* tape) {
  TensorT<T> out(x.shape());
  const T* xi = x.raw();
  T* o = out.raw();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) o[i] = xi[i] + c;
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    TensorT<T> a = x, y = out;
    tape->record([a, y, n]() mutable {
      T* g = a.grad_raw();
      const T* gy = y.grad_raw();
      for (std::int64_t i = 0; i < n; ++i) g[i] += gy[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul_scalar(const TensorT<T>& x, T c, std::type_identity_t<Tape<T>>* tape) {
  TensorT<T> out(x.shape());
  const T* xi = x.raw();
  T* o = out.raw();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) o[i] = xi[i] * c;
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    TensorT<T> a = x, y = out;
    tape->record([a, y, n, c]() mutable {
      T* g = a.grad_raw();
      const T* gy = y.grad_raw();
      for (std::int64_t i = 0; i < n; ++i) g[i] += gy[i] * c;
    });
  }
  return out;
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape) {
  const std::int64_t n = x.numel();
  T acc = 0;
  const T* xi = x.raw();
  for (std::int64_t i = 0; i < n; ++i) acc += xi[i];
  TensorT<T> out = TensorT<T>::scalar(acc / static_cast<T>(n));
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    TensorT<T> a = x, y = out;
    tape->record([a, y, n]() mutable {
      T* g = a.grad_raw();
      const T gv = y.grad_raw()[0] / static_cast<T>(n);
      for (std::int64_t i = 0; i < n; ++i) g[i] += gv;
    });
  }
  return out;
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, std::vector<std::int64_t> new_shape, std::type_identity_t<Tape<T>>* tape) {
  std::int64_t n = 1;
  for (auto e : new_shape) n *= e;
  if (n != x.numel())
    throw ShapeError("reshape: product " + std::to_string(n) + " != numel " +
                     std::to_string(x.numel()));
  TensorT<T> out(std::move(new_shape));
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    TensorT<T> a = x, y = out;
    tape->record([a, y]() mutable {
      T* g = a.grad_raw();
      const T* gy = y.grad_raw();
      for (std::int64_t i = 0; i < a.numel(); ++i) g[i] += gy[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& xs, std::type_identity_t<Tape<T>>* tape) {
  if (xs.empty()) throw UsageError("concat_channels: empty input list");
  for (const auto& x : xs) check_rank5(x, "concat_channels input");
  Dims5 d0 = dims5(xs[0]);
  std::int64_t ctotal = 0;
  for (const auto& x : xs) {
    Dims5 d = dims5(x);
    if (d.n != d0.n || d.d != d0.d || d.h != d0.h || d.w != d0.w)
      throw ShapeError("concat_channels: mismatched non-channel extents");
    ctotal += d.c;
  }
  TensorT<T> out({d0.n, ctotal, d0.d, d0.h, d0.w});
  const std::int64_t sp = d0.spatial();
  T* o = out.raw();
  bool any_grad = false;
  for (std::int64_t n = 0; n < d0.n; ++n) {
    std::int64_t coff = 0;
    for (const auto& x : xs) {
      const std::int64_t c = x.extent(1);
      std::memcpy(o + (n * ctotal + coff) * sp, x.raw() + n * c * sp, sizeof(T) * c * sp);
      coff += c;
    }
  }
  for (const auto& x : xs) any_grad |= x.requires_grad();
  if (tape && any_grad) {
    out.set_requires_grad(true);
    std::vector<TensorT<T>> parts = xs;
    TensorT<T> y = out;
    tape->record([parts, y, d0, ctotal, sp]() mutable {
      const T* gy = y.grad_raw();
      for (std::int64_t n = 0; n < d0.n; ++n) {
        std::int64_t coff = 0;
        for (auto& x : parts) {
          const std::int64_t c = x.extent(1);
          if (x.requires_grad()) {
            T* g = x.grad_raw() + n * c * sp;
            const T* src = gy + (n * ctotal + coff) * sp;
            for (std::int64_t i = 0; i < c * sp; ++i) g[i] += src[i];
          }
          coff += c;
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul_channel_scalars(const TensorT<T>& x, const TensorT<T>& s, std::type_identity_t<Tape<T>>* tape) {
  check_rank5(x, "mul_channel_scalars input");
  Dims5 d = dims5(x);
  if (s.rank() != 2 || s.extent(0) != d.n || s.extent(1) != d.c)
    throw ShapeError("mul_channel_scalars: scale must be [N,C] matching input");
  TensorT<T> out(x.shape());
  const T* xi = x.raw();
  const T* sv = s.raw();
  T* o = out.raw();
  for (std::int64_t n = 0; n < d.n; ++n)
    for (std::int64_t c = 0; c < d.c; ++c) {
      const T k = sv[n * d.c + c];
      const T* base = xi + (n * d.c + c) * d.spatial();
      T* obase = o + (n * d.c + c) * d.spatial();
      for (std::int64_t i = 0; i < d.spatial(); ++i) obase[i] = base[i] * k;
    }
  if (tape && (x.requires_grad() || s.requires_grad())) {
    out.set_requires_grad(true);
    TensorT<T> a = x, sc = s, y = out;
    tape->record([a, sc, y, d]() mutable {
      const T* gy = y.grad_raw();
      for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t c = 0; c < d.c; ++c) {
          const std::int64_t off = (n * d.c + c) * d.spatial();
          if (a.requires_grad()) {
            const T k = sc.raw()[n * d.c + c];
            T* g = a.grad_raw() + off;
            for (std::int64_t i = 0; i < d.spatial(); ++i) g[i] += gy[off + i] * k;
          }
          if (sc.requires_grad()) {
            const T* xv = a.raw() + off;
            T acc = 0;
            for (std::int64_t i = 0; i < d.spatial(); ++i) acc += gy[off + i] * xv[i];
            sc.grad_raw()[n * d.c + c] += acc;
          }
        }
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul_spatial_gate(const TensorT<T>& x, const TensorT<T>& g, std::type_identity_t<Tape<T>>* tape) {
  check_rank5(x, "mul_spatial_gate input");
  check_rank5(g, "mul_spatial_gate gate");
  Dims5 d = dims5(x);
  Dims5 gd = dims5(g);
  if (gd.n != d.n || gd.c != 1 || gd.d != d.d || gd.h != d.h || gd.w != d.w)
    throw ShapeError("mul_spatial_gate: gate must be [N,1,D,H,W] matching input");
  TensorT<T> out(x.shape());
  const T* xi = x.raw();
  const T* gv = g.raw();
  T* o = out.raw();
  for (std::int64_t n = 0; n < d.n; ++n) {
    const T* gbase = gv + n * d.spatial();
    for (std::int64_t c = 0; c < d.c; ++c) {
      const std::int64_t off = (n * d.c + c) * d.spatial();
      for (std::int64_t i = 0; i < d.spatial(); ++i) o[off + i] = xi[off + i] * gbase[i];
    }
  }
  if (tape && (x.requires_grad() || g.requires_grad())) {
    out.set_requires_grad(true);
    TensorT<T> a = x, gt = g, y = out;
    tape->record([a, gt, y, d]() mutable {
      const T* gy = y.grad_raw();
      for (std::int64_t n = 0; n < d.n; ++n) {
        const T* gbase = gt.raw() + n * d.spatial();
        for (std::int64_t c = 0; c < d.c; ++c) {
          const std::int64_t off = (n * d.c + c) * d.spatial();
          if (a.requires_grad()) {
            T* ga = a.grad_raw() + off;
            for (std::int64_t i = 0; i < d.spatial(); ++i) ga[i] += gy[off + i] * gbase[i];
          }
          if (gt.requires_grad()) {
            T* gg = gt.grad_raw() + n * d.spatial();
            const T* xv = a.raw() + off;
            for (std::int64_t i = 0; i < d.spatial(); ++i) gg[i] += gy[off + i] * xv[i];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> sum_channels(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape) {
  check_rank5(x, "sum_channels input");
  Dims5 d = dims5(x);
  TensorT<T> out({d.n, 1, d.d, d.h, d.w});
  const T* xi = x.raw();
  T* o = out.raw();
  for (std::int64_t n = 0; n < d.n; ++n) {
    T* obase = o + n * d.spatial();
    std::memset(obase, 0, sizeof(T) * d.spatial());
    for (std::int64_t c = 0; c < d.c; ++c) {
      const T* base = xi + (n * d.c + c) * d.spatial();
      for (std::int64_t i = 0; i < d.spatial(); ++i) obase[i] += base[i];
    }
  }
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    TensorT<T> a = x, y = out;
    tape->record([a, y, d]() mutable {
      T* g = a.grad_raw();
      const T* gy = y.grad_raw();
      for (std::int64_t n = 0; n < d.n; ++n) {
        const T* gbase = gy + n * d.spatial();
        for (std::int64_t c = 0; c < d.c; ++c) {
          T* gdst = g + (n * d.c + c) * d.spatial();
          for (std::int64_t i = 0; i < d.spatial(); ++i) gdst[i] += gbase[i];
        }
      }
    });
  }
  return out;
}

// --- explicit instantiations ------------------------------------------------

#define UNN_INSTANTIATE_OPS(T)                                                            \
  template TensorT<T> conv3d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, \
                                const ConvSpec&, Tape<T>*);                              \
  template TensorT<T> tconv3d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,\
                                 const ConvSpec&,                                         \
                                 std::optional<std::array<std::int64_t, 3>>, Tape<T>*);   \
  template TensorT<T> fully_connected<T>(const TensorT<T>&, const TensorT<T>&,           \
                                         const TensorT<T>&, Tape<T>*);                   \
  template TensorT<T> relu<T>(const TensorT<T>&, Tape<T>*);                              \
  template TensorT<T> sigmoid<T>(const TensorT<T>&, Tape<T>*);                           \
  template TensorT<T> softmax_rows<T>(const TensorT<T>&, Tape<T>*);                      \
  template TensorT<T> global_avg_pool<T>(const TensorT<T>&, Tape<T>*);                   \
  template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&, Tape<T>*);            \
  template TensorT<T> sub<T>(const TensorT<T>&, const TensorT<T>&, Tape<T>*);            \
  template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&, Tape<T>*);            \
  template TensorT<T> divide<T>(const TensorT<T>&, const TensorT<T>&, Tape<T>*);         \
  template TensorT<T> eltmax<T>(const TensorT<T>&, const TensorT<T>&, Tape<T>*);         \
  template TensorT<T> abs_val<T>(const TensorT<T>&, Tape<T>*);                           \
  template TensorT<T> add_scalar<T>(const TensorT<T>&, T, Tape<T>*);                     \
  template TensorT<T> mul_scalar<T>(const TensorT<T>&, T, Tape<T>*);                     \
  template TensorT<T> mean_all<T>(const TensorT<T>&, Tape<T>*);                          \
  template TensorT<T> reshape<T>(const TensorT<T>&, std::vector<std::int64_t>, Tape<T>*);\
  template TensorT<T> concat_channels<T>(const std::vector<TensorT<T>>&, Tape<T>*);      \
  template TensorT<T> mul_channel_scalars<T>(const TensorT<T>&, const TensorT<T>&,       \
                                             Tape<T>*);                                  \
  template TensorT<T> mul_spatial_gate<T>(const TensorT<T>&, const TensorT<T>&, Tape<T>*);\
  template TensorT<T> sum_channels<T>(const TensorT<T>&, Tape<T>*);

UNN_INSTANTIATE_OPS(float)
UNN_INSTANTIATE_OPS(double)

}  // namespace unn

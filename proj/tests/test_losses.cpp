#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "unn/losses.hpp"
#include "unn/ops.hpp"

using namespace unn;
using namespace unn::testing;

TEST_CASE("mae: identical, normalization, brute-force oracle") {
  TensorT<float> a = TensorT<float>::full({2, 1, 3, 4, 4}, 0.7f);
  CHECK(mae_loss(a, a).data()[0] == 0.0f);

  TensorT<float> ones = TensorT<float>::full({2, 1, 3, 4, 4}, 1.0f);
  TensorT<float> zeros({2, 1, 3, 4, 4});
  CHECK(mae_loss(ones, zeros).data()[0] == doctest::Approx(1.0f));

  Rng rng(1);
  TensorT<double> y({3, 1, 2, 5, 5}), x({3, 1, 2, 5, 5});
  fill_random(y, rng);
  fill_random(x, rng);
  double oracle = 0;
  for (std::int64_t i = 0; i < y.numel(); ++i)
    oracle += std::abs(y.data()[i] - x.data()[i]);
  oracle /= y.numel();
  CHECK(std::abs(mae_loss(y, x).data()[0] - oracle) < 1e-7);

  TensorT<float> wrong({2, 1, 3, 4, 5});
  CHECK_THROWS_AS(mae_loss(ones, wrong), ShapeError);
}

TEST_CASE("ssim constants: C1=1e-4, C2=9e-4 at R=1") {
  SsimParams p;
  CHECK(p.c1() == doctest::Approx(1e-4));
  CHECK(p.c2() == doctest::Approx(9e-4));
  p.dynamic_range = 2.0;
  CHECK(p.c1() == doctest::Approx(4e-4));
}

TEST_CASE("ssim_map: identical slices give exactly 1") {
  Rng rng(2);
  TensorT<double> img({32, 32});
  fill_random(img, rng, 0.0, 1.0);
  SsimParams p;
  const double s = ssim_map(img, img, p).data()[0];
  CHECK(std::abs(s - 1.0) < 1e-9);
}

TEST_CASE("ssim_map: matches the double-loop oracle") {
  Rng rng(3);
  TensorT<double> a({20, 25}), b({20, 25});
  fill_random(a, rng, 0.0, 1.0);
  fill_random(b, rng, 0.0, 1.0);
  SsimParams p;
  const double got = ssim_map(a, b, p).data()[0];
  const double want = ssim_double_loop(
      std::vector<double>(a.data().begin(), a.data().end()),
      std::vector<double>(b.data().begin(), b.data().end()), 20, 25, p.window, p.c1(),
      p.c2());
  CHECK(std::abs(got - want) < 1e-6);
}

TEST_CASE("ssim_map: window larger than the slice is an error") {
  TensorT<double> small({8, 8});
  SsimParams p;
  CHECK_THROWS_AS(ssim_map(small, small, p), ShapeError);
}

TEST_CASE("ssim_3axis: identity, axis permutation symmetry, per-axis oracle") {
  Rng rng(4);
  TensorT<double> a({1, 1, 12, 14, 13}), b({1, 1, 12, 14, 13});
  fill_random(a, rng, 0.0, 1.0);
  fill_random(b, rng, 0.0, 1.0);
  SsimParams p;

  CHECK(std::abs(ssim_3axis(a, a, p).data()[0] - 1.0) < 1e-9);

  const double s3 = ssim_3axis(a, b, p).data()[0];
  const double mean_axes = (ssim_axis(a, b, SliceAxis::Axial, p).data()[0] +
                            ssim_axis(a, b, SliceAxis::Coronal, p).data()[0] +
                            ssim_axis(a, b, SliceAxis::Sagittal, p).data()[0]) /
                           3.0;
  CHECK(std::abs(s3 - mean_axes) < 1e-12);

  // per-axis result equals the slice-loop oracle (axial here)
  const std::int64_t D = 12, H = 14, W = 13;
  double oracle = 0;
  for (std::int64_t d = 0; d < D; ++d) {
    std::vector<double> sa(H * W), sb(H * W);
    for (std::int64_t i = 0; i < H * W; ++i) {
      sa[i] = a.data()[d * H * W + i];
      sb[i] = b.data()[d * H * W + i];
    }
    oracle += ssim_double_loop(sa, sb, H, W, p.window, p.c1(), p.c2());
  }
  oracle /= D;
  CHECK(std::abs(ssim_axis(a, b, SliceAxis::Axial, p).data()[0] - oracle) < 1e-6);

  // permuting both volumes identically leaves the 3-axis mean unchanged
  TensorT<double> at({1, 1, 13, 12, 14}), bt({1, 1, 13, 12, 14});
  for (std::int64_t d = 0; d < D; ++d)
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t w = 0; w < W; ++w) {
        at.data()[(w * 12 + d) * 14 + h] = a.data()[(d * H + h) * W + w];
        bt.data()[(w * 12 + d) * 14 + h] = b.data()[(d * H + h) * W + w];
      }
  const double s3_perm = ssim_3axis(at, bt, p).data()[0];
  CHECK(std::abs(s3 - s3_perm) < 1e-9);
}

TEST_CASE("ssim_3axis: too-small axis names the axis") {
  TensorT<double> thin({1, 1, 4, 32, 32});
  SsimParams p;
  CHECK_THROWS_WITH_AS(ssim_3axis(thin, thin, p), doctest::Contains("coronal"),
                       ShapeError);
}

TEST_CASE("composite loss: identity, lambda default, recomposition oracle") {
  LossConfig cfg;
  CHECK(cfg.lambda_a == doctest::Approx(0.6));

  Rng rng(5);
  TensorT<double> y({1, 1, 12, 16, 16}), x({1, 1, 12, 16, 16});
  fill_random(y, rng, 0.0, 1.0);
  fill_random(x, rng, 0.0, 1.0);
  cfg.ssim.dynamic_range = label_dynamic_range(y);

  CHECK(composite_loss(y, y, cfg).data()[0] == doctest::Approx(0.0).epsilon(1e-9));

  const double got = composite_loss(y, x, cfg).data()[0];
  const double recomposed =
      mae_loss(y, x).data()[0] + 0.6 * (1.0 - ssim_3axis(y, x, cfg.ssim).data()[0]);
  CHECK(std::abs(got - recomposed) < 1e-7);
  CHECK(got >= 0.0);
}

TEST_CASE("stage2 loss: zero at identity, equals two composite terms") {
  Rng rng(6);
  TensorT<double> label({1, 1, 12, 16, 16}), out({1, 1, 12, 16, 16}), ws({1, 1, 12, 16, 16});
  fill_random(label, rng, 0.0, 1.0);
  fill_random(out, rng, 0.0, 1.0);
  fill_random(ws, rng, 0.0, 1.0);
  LossConfig cfg;
  cfg.ssim.dynamic_range = label_dynamic_range(label);

  CHECK(stage2_loss(label, label, label, cfg).data()[0] ==
        doctest::Approx(0.0).epsilon(1e-9));

  const double got = stage2_loss(label, out, ws, cfg).data()[0];
  const double re =
      composite_loss(label, out, cfg).data()[0] + composite_loss(label, ws, cfg).data()[0];
  CHECK(std::abs(got - re) < 1e-7);
}

TEST_CASE("loss gradients pass finite differences through the SSIM windowing") {
  Rng rng(7);
  TensorT<double> y({1, 1, 11, 12, 12}), x({1, 1, 11, 12, 12});
  fill_random(y, rng, 0.1, 1.0);
  fill_random(x, rng, 0.1, 1.0);
  x.set_requires_grad(true);
  LossConfig cfg;
  cfg.ssim.dynamic_range = 1.0;

  GradCheck gc;
  gc.max_full = 100000;
  const double err = gc.max_rel_err(
      {x}, [&]() { return composite_loss(y, x, cfg).data()[0]; },
      [&](Tape<double>& t) { return composite_loss(y, x, cfg, &t); });
  CHECK(err < 1e-4);
}

TEST_CASE("composite loss is nonnegative and zero only at identity") {
  Rng rng(8);
  LossConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    TensorT<double> y({1, 1, 11, 12, 12}), x({1, 1, 11, 12, 12});
    fill_random(y, rng, 0.0, 1.0);
    fill_random(x, rng, 0.0, 1.0);
    cfg.ssim.dynamic_range = label_dynamic_range(y);
    const double v = composite_loss(y, x, cfg).data()[0];
    CHECK(v > 0.0);
  }
}

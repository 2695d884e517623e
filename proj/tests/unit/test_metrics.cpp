// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include "oracles.hpp"

using namespace mavfi;
using Catch::Approx;

TEST_CASE("PSNR closed forms") {
  CHECK(psnr(Frame<double>(8, 8, 0.75), Frame<double>(8, 8, 0.25)) == Approx(6.0206).margin(1e-3));
  CHECK(psnr(Frame<double>(8, 8, 0.3), Frame<double>(8, 8, 0.2)) == Approx(20.0).margin(1e-3));
  CHECK(psnr(Frame<double>(8, 8, 0.3), Frame<double>(8, 8, 0.3)) == kPsnrCap);
  CHECK_THROWS_AS(psnr(Frame<double>(8, 8), Frame<double>(8, 9)), ContractError);
}

TEST_CASE("PSNR is symmetric and decreases with error") {
  Rng rng(1);
  const auto gt = oracle::random_frame<double>(16, 16, rng, 0.2, 0.8);
  const auto noise = oracle::random_tensor<double>({3, 16, 16}, rng, -0.1, 0.1);
  double prev = kPsnrCap + 1;
  for (double c : {0.5, 1.0, 1.5, 2.0}) {
    const Frame<double> pred(zip(gt.tensor(), noise, [c](double a, double n) { return a + c * n; }));
    const double p = psnr(pred, gt);
    CHECK(p < prev);
    CHECK(p == Approx(psnr(gt, pred)));
    prev = p;
  }
}

TEST_CASE("SSIM constant patches and identity") {
  // Constant patches: variance terms vanish, leaving (2xy + c1) / (x^2 + y^2 + c1).
  const double closed = (2 * 0.2 * 0.4 + 1e-4) / (0.2 * 0.2 + 0.4 * 0.4 + 1e-4);
  CHECK(ssim(Frame<double>(16, 16, 0.2), Frame<double>(16, 16, 0.4)) == Approx(closed).margin(1e-9));
  Rng rng(2);
  const auto a = oracle::random_frame<double>(20, 17, rng);
  CHECK(ssim(a, a) == Approx(1.0).margin(1e-12));
  CHECK_THROWS_AS(ssim(Frame<double>(10, 16), Frame<double>(10, 16)), ContractError);
}

TEST_CASE("SSIM agrees with the direct-window reference") {
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const int H = rng.uniform_int(11, 24), W = rng.uniform_int(11, 24);
    const auto a = oracle::random_frame<double>(H, W, rng);
    const auto b = oracle::random_frame<double>(H, W, rng);
    const double got = ssim(a, b);
    CHECK(got == Approx(oracle::ssim(a.tensor(), b.tensor())).margin(1e-6));
    CHECK(got == Approx(ssim(b, a)).margin(1e-12));
    CHECK(got <= 1.0);
  }
}

TEST_CASE("interpolation error is RMS on the 8-bit scale") {
  CHECK(interpolation_error(Frame<double>(8, 8, 0.5), Frame<double>(8, 8, 0.5 + 1.0 / 255)) == Approx(1.0));
  CHECK(interpolation_error(Frame<double>(4, 4, 0.1), Frame<double>(4, 4, 0.1)) == 0.0);
  Rng rng(4);
  const auto gt = oracle::random_frame<double>(9, 9, rng, 0.3, 0.7);
  const auto noise = oracle::random_tensor<double>({3, 9, 9}, rng, -0.05, 0.05);
  double prev = -1;
  for (double c : {1.0, 1.5, 3.0}) {
    const Frame<double> pred(zip(gt.tensor(), noise, [c](double a, double n) { return a + c * n; }));
    const double ie = interpolation_error(pred, gt);
    CHECK(ie > prev);
    prev = ie;
  }
}

TEST_CASE("endpoint error") {
  CHECK(epe(FlowField<double>(5, 6, 3.0, 4.0), FlowField<double>(5, 6)) == 5.0);
  CHECK(epe(FlowField<double>(5, 6, 1.0, 1.0), FlowField<double>(5, 6, 1.0, 1.0)) == 0.0);
  CHECK_THROWS_AS(epe(FlowField<double>(5, 6), FlowField<double>(6, 5)), ContractError);
}

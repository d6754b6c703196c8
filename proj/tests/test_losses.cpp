#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "evgs/losses.hpp"
#include "evgs/rng.hpp"

using namespace evgs;

namespace {

Image random_image(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Image img(h, w, c);
  for (double& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

EventFrame random_frame(int h, int w, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  EventFrame f(h, w, 0, 1);
  for (double& v : f.values) v = rng.uniform(lo, hi);
  return f;
}

double test_luminance(const Image& img, int y, int x) {
  if (img.channels == 1) return img.at(y, x, 0);
  return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

// Direct windowed SSIM, built from the textbook statistics with its own
// kernel. No code shared with the library path.
double reference_ssim(const Image& a, const Image& b) {
  const int win = 11;
  double k2d[11][11];
  double ksum = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double dy = i - 5.0;
      const double dx = j - 5.0;
      k2d[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 2.25));
      ksum += k2d[i][j];
    }
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) k2d[i][j] /= ksum;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int ch = 0; ch < a.channels; ++ch)
    for (int y = 0; y + win <= a.height; ++y)
      for (int x = 0; x + win <= a.width; ++x) {
        double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double va = a.at(y + i, x + j, ch);
            const double vb = b.at(y + i, x + j, ch);
            ma += k2d[i][j] * va;
            mb += k2d[i][j] * vb;
            maa += k2d[i][j] * va * va;
            mbb += k2d[i][j] * vb * vb;
            mab += k2d[i][j] * va * vb;
          }
        const double var_a = maa - ma * ma;
        const double var_b = mbb - mb * mb;
        const double cov = mab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        ++count;
      }
  return total / count;
}

}  // namespace

TEST_CASE("event loss vanishes on a consistent image pair") {
  const int h = 12, w = 10;
  const double eps = 1e-3;
  Image i1 = random_image(h, w, 3, 11, 0.2, 0.8);
  EventFrame e = random_frame(h, w, 12, -0.2, 0.2);
  Image i2(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double lum2 = (test_luminance(i1, y, x) + eps) * std::exp(e.at(y, x)) - eps;
      for (int c = 0; c < 3; ++c) i2.at(y, x, c) = lum2;
    }
  CHECK(event_loss(i1, i2, e, eps) <= 1e-12);
}

TEST_CASE("event loss of a single nonzero residual is its square over the pixel count") {
  const int h = 8, w = 8;
  Image i1 = random_image(h, w, 3, 21, 0.1, 0.9);
  EventFrame e(h, w, 0, 1);
  e.at(3, 4) = 0.1;
  CHECK(event_loss(i1, i1, e) == doctest::Approx(0.01 / (h * w)).epsilon(1e-12));
}

TEST_CASE("event loss matches a per-pixel scalar recomputation") {
  const int h = 8, w = 8;
  const double eps = 1e-3;
  Image i1 = random_image(h, w, 3, 31, 0.05, 0.95);
  Image i2 = random_image(h, w, 3, 32, 0.05, 0.95);
  EventFrame e = random_frame(h, w, 33, -0.5, 0.5);
  double expected = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r = std::log(test_luminance(i2, y, x) + eps) -
                       std::log(test_luminance(i1, y, x) + eps) - e.at(y, x);
      expected += r * r;
    }
  expected /= h * w;
  CHECK(event_loss(i1, i2, e, eps) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("event loss rejects mismatched shapes") {
  Image i1(8, 8, 3), i2(8, 9, 3);
  EventFrame e(8, 8, 0, 1);
  CHECK_THROWS_AS((void)event_loss(i1, i2, e), std::invalid_argument);
  Image i3(8, 8, 3);
  EventFrame e2(9, 8, 0, 1);
  CHECK_THROWS_AS((void)event_loss(i1, i3, e2), std::invalid_argument);
}

TEST_CASE("event loss gradients match finite differences") {
  const int h = 5, w = 4;
  const double eps = 1e-3;
  Image i1 = random_image(h, w, 3, 41, 0.1, 0.9);
  Image i2 = random_image(h, w, 3, 42, 0.1, 0.9);
  EventFrame e = random_frame(h, w, 43, -0.3, 0.3);
  auto grads = event_loss_backward(i1, i2, e, eps);
  const double step = 1e-6;
  for (int which = 0; which < 2; ++which) {
    Image& target = which == 0 ? i1 : i2;
    const Image& analytic = which == 0 ? grads.d_first : grads.d_second;
    for (std::size_t i = 0; i < target.data.size(); ++i) {
      const double saved = target.data[i];
      target.data[i] = saved + step;
      const double hi = event_loss(i1, i2, e, eps);
      target.data[i] = saved - step;
      const double lo = event_loss(i1, i2, e, eps);
      target.data[i] = saved;
      const double fd = (hi - lo) / (2 * step);
      CHECK(analytic.data[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("per-channel event loss agrees with luminance mode on gray images") {
  const int h = 6, w = 6;
  Image gray1(h, w, 3), gray2(h, w, 3);
  Rng rng(55);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v1 = rng.uniform(0.1, 0.9);
      const double v2 = rng.uniform(0.1, 0.9);
      for (int c = 0; c < 3; ++c) {
        gray1.at(y, x, c) = v1;
        gray2.at(y, x, c) = v2;
      }
    }
  EventFrame e = random_frame(h, w, 56, -0.2, 0.2);
  const double lum = event_loss(gray1, gray2, e, 1e-3, EventLossMode::Luminance);
  const double per = event_loss(gray1, gray2, e, 1e-3, EventLossMode::PerChannel);
  CHECK(per == doctest::Approx(lum).epsilon(1e-12));
}

TEST_CASE("prior L1 loss examples") {
  Image a = random_image(9, 7, 3, 61);
  CHECK(prior_l1_loss(a, a) == 0.0);
  Image zeros(4, 4, 3), quarter(4, 4, 3, 0.25);
  CHECK(prior_l1_loss(zeros, quarter) == doctest::Approx(0.25).epsilon(1e-15));
  Image b = random_image(9, 7, 3, 62);
  double expected = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) expected += std::abs(a.data[i] - b.data[i]);
  expected /= a.data.size();
  CHECK(prior_l1_loss(a, b) == doctest::Approx(expected).epsilon(1e-12));
  Image c(9, 8, 3);
  CHECK_THROWS_AS((void)prior_l1_loss(a, c), std::invalid_argument);
}

TEST_CASE("prior L1 gradient matches finite differences away from ties") {
  const int h = 5, w = 5;
  Image e2v = random_image(h, w, 3, 71, 0.0, 0.45);
  Image render = random_image(h, w, 3, 72, 0.55, 1.0);
  Rng rng(73);
  for (std::size_t i = 0; i < render.data.size(); ++i)
    if (rng.uniform() < 0.5) std::swap(e2v.data[i], render.data[i]);
  Image grad = prior_l1_backward(e2v, render);
  const double step = 1e-6;
  for (std::size_t i = 0; i < render.data.size(); ++i) {
    const double saved = render.data[i];
    render.data[i] = saved + step;
    const double hi = prior_l1_loss(e2v, render);
    render.data[i] = saved - step;
    const double lo = prior_l1_loss(e2v, render);
    render.data[i] = saved;
    CHECK(grad.data[i] == doctest::Approx((hi - lo) / (2 * step)).epsilon(1e-6));
  }
}

TEST_CASE("ssim of an image with itself is one") {
  Image a = random_image(24, 20, 3, 81);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ssim of constant black vs constant white hits the closed form") {
  Image black(16, 16, 1), white(16, 16, 1, 1.0);
  const double c1 = 1e-4;
  CHECK(ssim(black, white) == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-6));
  CHECK(reg_loss(black, white) == doctest::Approx(1.0 - c1 / (1.0 + c1)).epsilon(1e-6));
}

TEST_CASE("ssim matches an independent windowed reference") {
  Image a1 = random_image(32, 32, 1, 91);
  Image b1 = random_image(32, 32, 1, 92);
  CHECK(ssim(a1, b1) == doctest::Approx(reference_ssim(a1, b1)).epsilon(1e-6));
  Image a3 = random_image(32, 32, 3, 93);
  Image b3 = random_image(32, 32, 3, 94);
  CHECK(ssim(a3, b3) == doctest::Approx(reference_ssim(a3, b3)).epsilon(1e-6));
}

TEST_CASE("ssim is symmetric and bounded above by one") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Image a = random_image(14, 15, 3, 100 + s);
    Image b = random_image(14, 15, 3, 200 + s);
    const double fwd = ssim(a, b);
    CHECK(fwd == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    CHECK(fwd <= 1.0 + 1e-9);
  }
}

TEST_CASE("ssim rejects images smaller than its window") {
  Image small(10, 11, 1), other(10, 11, 1);
  CHECK_THROWS_AS((void)ssim(small, other), std::invalid_argument);
  Image ok(11, 11, 1), ok2(11, 11, 1);
  CHECK_NOTHROW((void)ssim(ok, ok2));
}

TEST_CASE("ssim gradient matches finite differences") {
  Image a = random_image(13, 13, 1, 111);
  Image b = random_image(13, 13, 1, 112);
  Image grad = ssim_backward(a, b);
  const double step = 1e-5;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double saved = a.data[i];
    a.data[i] = saved + step;
    const double hi = ssim(a, b);
    a.data[i] = saved - step;
    const double lo = ssim(a, b);
    a.data[i] = saved;
    const double fd = (hi - lo) / (2 * step);
    CHECK(grad.data[i] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("reg loss gradient matches finite differences on a color pair") {
  Image e2v = random_image(12, 13, 3, 121);
  Image render = random_image(12, 13, 3, 122);
  Image grad = reg_loss_backward(e2v, render);
  Rng rng(123);
  const double step = 1e-5;
  for (int probe = 0; probe < 60; ++probe) {
    const std::size_t i = rng.uniform_index(render.data.size());
    const double saved = render.data[i];
    render.data[i] = saved + step;
    const double hi = reg_loss(e2v, render);
    render.data[i] = saved - step;
    const double lo = reg_loss(e2v, render);
    render.data[i] = saved;
    const double fd = (hi - lo) / (2 * step);
    CHECK(grad.data[i] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("reg loss equals one minus ssim") {
  Image a = random_image(12, 12, 3, 131);
  CHECK(reg_loss(a, a) == doctest::Approx(0.0).epsilon(1e-9));
  for (std::uint64_t s = 0; s < 100; ++s) {
    Image x = random_image(12, 12, 1, 300 + s);
    Image y = random_image(12, 12, 1, 400 + s);
    CHECK(reg_loss(x, y) == 1.0 - ssim(x, y));
  }
}

TEST_CASE("total loss weighting") {
  const LossWeights defaults;
  CHECK(total_loss(1.0, 1.0, defaults) == 0.022);
  CHECK(total_loss(0.0, 0.0, defaults) == 0.0);
  Rng rng(141);
  for (int i = 0; i < 50; ++i) {
    const double ev = rng.uniform(0.0, 2.0);
    const double rg = rng.uniform(0.0, 2.0);
    CHECK(total_loss(ev, rg, defaults) == doctest::Approx(0.02 * ev + 0.002 * rg).epsilon(1e-15));
  }
}

TEST_CASE("log affine alignment is the identity on matching images") {
  Image ref = random_image(16, 16, 3, 151, 0.05, 0.95);
  auto out = log_affine_align(ref, ref);
  CHECK_FALSE(out.degenerate);
  for (int c = 0; c < 3; ++c) {
    CHECK(out.log_gain[c] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(out.log_offset[c] == doctest::Approx(0.0).epsilon(1e-9));
  }
  for (std::size_t i = 0; i < ref.data.size(); ++i)
    CHECK(out.image.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-9));
}

TEST_CASE("log affine alignment removes a gamma distortion") {
  Image ref = random_image(32, 32, 3, 161, 0.2, 0.8);
  Image pred(32, 32, 3);
  for (std::size_t i = 0; i < ref.data.size(); ++i) pred.data[i] = ref.data[i] * ref.data[i];
  auto out = log_affine_align(pred, ref);
  CHECK_FALSE(out.degenerate);
  CHECK(psnr(out.image, ref) >= 60.0);
}

TEST_CASE("log affine alignment inverts an exposure shift exactly") {
  const double eps = 1e-3;
  Image ref = random_image(16, 16, 3, 171, 0.1, 0.9);
  Image pred(16, 16, 3);
  for (std::size_t i = 0; i < ref.data.size(); ++i)
    pred.data[i] = 0.5 * (ref.data[i] + eps) - eps;
  auto out = log_affine_align(pred, ref, eps);
  CHECK_FALSE(out.degenerate);
  for (std::size_t i = 0; i < ref.data.size(); ++i)
    CHECK(out.image.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-6));
}

TEST_CASE("log affine alignment flags a constant prediction") {
  Image pred(8, 8, 1, 0.3);
  Image ref = random_image(8, 8, 1, 181, 0.2, 0.8);
  auto out = log_affine_align(pred, ref);
  CHECK(out.degenerate);
  double mean_log = 0.0;
  for (double v : ref.data) mean_log += std::log(v + 1e-3);
  mean_log /= ref.data.size();
  const double expected = std::exp(mean_log) - 1e-3;
  for (double v : out.image.data) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("aligned psnr is invariant to the applied log-affine distortion") {
  const double eps = 1e-3;
  Image ref = random_image(16, 16, 3, 191, 0.1, 0.8);
  std::vector<double> scores;
  for (auto [ga, gb] : {std::pair{0.8, -0.3}, std::pair{1.0, 0.0}, std::pair{1.2, -0.2}}) {
    Image pred(16, 16, 3);
    for (std::size_t i = 0; i < ref.data.size(); ++i)
      pred.data[i] = std::exp(ga * std::log(ref.data[i] + eps) + gb) - eps;
    for (double v : pred.data) REQUIRE((v >= 0.0 && v <= 1.0));
    scores.push_back(psnr(log_affine_align(pred, ref, eps).image, ref));
  }
  for (double s : scores) CHECK(s == doctest::Approx(scores.front()).epsilon(1e-6));
}

TEST_CASE("psnr examples") {
  Image a = random_image(10, 10, 3, 201);
  CHECK(psnr(a, a) == 100.0);
  Image b = a;
  for (double& v : b.data) v += 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  Image c = random_image(10, 10, 3, 202);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - c.data[i];
    mse += d * d;
  }
  mse /= a.data.size();
  CHECK(psnr(a, c) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));
}

TEST_CASE("loss reports serialize as single-line json records") {
  LossReport r;
  r.iteration = 5;
  r.event_loss = 0.5;
  r.reg_loss = 0.25;
  r.prior_l1 = 0.125;
  r.total = 0.0105;
  const std::string line = to_json_line(r);
  CHECK(line.find('\n') == std::string::npos);
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("iter").get<std::int64_t>() == 5);
  CHECK(j.at("event").get<double>() == 0.5);
  CHECK(j.at("reg").get<double>() == 0.25);
  CHECK(j.at("prior_l1").get<double>() == 0.125);
  CHECK(j.at("total").get<double>() == 0.0105);
  CHECK(line.rfind("{\"iter\":5,\"event\":0.5,", 0) == 0);
}

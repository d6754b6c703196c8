#include "evgs/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace evgs {
namespace {

constexpr double kLumWeights3[3] = {0.299, 0.587, 0.114};

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": image shapes differ");
}

void require_frame_shape(const Image& img, const EventFrame& frame, const char* what) {
  if (img.height != frame.height || img.width != frame.width)
    throw std::invalid_argument(std::string(what) + ": event frame resolution differs from images");
}

const double* luminance_weights(int channels, const char* what) {
  static constexpr double kOne[1] = {1.0};
  if (channels == 1) return kOne;
  if (channels == 3) return kLumWeights3;
  throw std::invalid_argument(std::string(what) + ": images must have 1 or 3 channels");
}

double pixel_luminance(const Image& img, int y, int x, const double* w) {
  double lum = 0.0;
  for (int c = 0; c < img.channels; ++c) lum += w[c] * img.at(y, x, c);
  return lum;
}

// 11-tap Gaussian, std 1.5, normalized.
constexpr int kWindow = 11;

const std::array<double, kWindow>& ssim_kernel() {
  static const std::array<double, kWindow> k = [] {
    std::array<double, kWindow> v{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - (kWindow - 1) / 2.0;
      v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += v[i];
    }
    for (double& x : v) x /= sum;
    return v;
  }();
  return k;
}

struct Plane {
  int height = 0;
  int width = 0;
  std::vector<double> data;
  Plane(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0.0) {}
  double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// Valid-placement separable convolution with the SSIM kernel.
Plane blur_valid(const Plane& src) {
  const auto& k = ssim_kernel();
  Plane horiz(src.height, src.width - kWindow + 1);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < horiz.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * src.at(y, x + i);
      horiz.at(y, x) = acc;
    }
  Plane out(src.height - kWindow + 1, horiz.width);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * horiz.at(y + i, x);
      out.at(y, x) = acc;
    }
  return out;
}

Plane extract_channel(const Image& img, int c) {
  Plane p(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) p.at(y, x) = img.at(y, x, c);
  return p;
}

Plane hadamard(const Plane& a, const Plane& b) {
  Plane out(a.height, a.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

struct SsimFields {
  Plane mu_a, mu_b, raw_aa, raw_bb, raw_ab;
  SsimFields(Plane ma, Plane mb, Plane aa, Plane bb, Plane ab)
      : mu_a(std::move(ma)), mu_b(std::move(mb)), raw_aa(std::move(aa)), raw_bb(std::move(bb)),
        raw_ab(std::move(ab)) {}
};

SsimFields ssim_fields(const Plane& a, const Plane& b) {
  return SsimFields(blur_valid(a), blur_valid(b), blur_valid(hadamard(a, a)),
                    blur_valid(hadamard(b, b)), blur_valid(hadamard(a, b)));
}

double ssim_map_value(const SsimFields& f, int y, int x) {
  const double u = f.mu_a.at(y, x);
  const double v = f.mu_b.at(y, x);
  const double var_a = f.raw_aa.at(y, x) - u * u;
  const double var_b = f.raw_bb.at(y, x) - v * v;
  const double cov = f.raw_ab.at(y, x) - u * v;
  const double n1 = 2.0 * u * v + kC1;
  const double n2 = 2.0 * cov + kC2;
  const double d1 = u * u + v * v + kC1;
  const double d2 = var_a + var_b + kC2;
  return (n1 * n2) / (d1 * d2);
}

void check_ssim_args(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.height < kWindow || a.width < kWindow)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
}

}  // namespace

std::string to_json_line(const LossReport& report) {
  nlohmann::ordered_json j;
  j["iter"] = report.iteration;
  j["event"] = report.event_loss;
  j["reg"] = report.reg_loss;
  j["prior_l1"] = report.prior_l1;
  j["total"] = report.total;
  return j.dump();
}

double event_loss(const Image& i_t1, const Image& i_t2, const EventFrame& events,
                  double log_epsilon, EventLossMode mode) {
  require_same_shape(i_t1, i_t2, "event_loss");
  require_frame_shape(i_t1, events, "event_loss");
  double acc = 0.0;
  if (mode == EventLossMode::Luminance) {
    const double* w = luminance_weights(i_t1.channels, "event_loss");
    for (int y = 0; y < i_t1.height; ++y)
      for (int x = 0; x < i_t1.width; ++x) {
        const double l1 = pixel_luminance(i_t1, y, x, w);
        const double l2 = pixel_luminance(i_t2, y, x, w);
        const double r = std::log(l2 + log_epsilon) - std::log(l1 + log_epsilon) - events.at(y, x);
        acc += r * r;
      }
    return acc / (static_cast<double>(i_t1.height) * i_t1.width);
  }
  for (int y = 0; y < i_t1.height; ++y)
    for (int x = 0; x < i_t1.width; ++x)
      for (int c = 0; c < i_t1.channels; ++c) {
        const double r = std::log(i_t2.at(y, x, c) + log_epsilon) -
                         std::log(i_t1.at(y, x, c) + log_epsilon) - events.at(y, x);
        acc += r * r;
      }
  return acc / (static_cast<double>(i_t1.height) * i_t1.width * i_t1.channels);
}

ImagePairGrads event_loss_backward(const Image& i_t1, const Image& i_t2, const EventFrame& events,
                                   double log_epsilon, EventLossMode mode) {
  require_same_shape(i_t1, i_t2, "event_loss");
  require_frame_shape(i_t1, events, "event_loss");
  ImagePairGrads grads{Image(i_t1.height, i_t1.width, i_t1.channels),
                       Image(i_t1.height, i_t1.width, i_t1.channels)};
  if (mode == EventLossMode::Luminance) {
    const double* w = luminance_weights(i_t1.channels, "event_loss");
    const double inv_n = 1.0 / (static_cast<double>(i_t1.height) * i_t1.width);
    for (int y = 0; y < i_t1.height; ++y)
      for (int x = 0; x < i_t1.width; ++x) {
        const double l1 = pixel_luminance(i_t1, y, x, w);
        const double l2 = pixel_luminance(i_t2, y, x, w);
        const double r = std::log(l2 + log_epsilon) - std::log(l1 + log_epsilon) - events.at(y, x);
        const double d_l2 = 2.0 * r * inv_n / (l2 + log_epsilon);
        const double d_l1 = -2.0 * r * inv_n / (l1 + log_epsilon);
        for (int c = 0; c < i_t1.channels; ++c) {
          grads.d_first.at(y, x, c) = d_l1 * w[c];
          grads.d_second.at(y, x, c) = d_l2 * w[c];
        }
      }
    return grads;
  }
  const double inv_n = 1.0 / (static_cast<double>(i_t1.height) * i_t1.width * i_t1.channels);
  for (int y = 0; y < i_t1.height; ++y)
    for (int x = 0; x < i_t1.width; ++x)
      for (int c = 0; c < i_t1.channels; ++c) {
        const double r = std::log(i_t2.at(y, x, c) + log_epsilon) -
                         std::log(i_t1.at(y, x, c) + log_epsilon) - events.at(y, x);
        grads.d_first.at(y, x, c) = -2.0 * r * inv_n / (i_t1.at(y, x, c) + log_epsilon);
        grads.d_second.at(y, x, c) = 2.0 * r * inv_n / (i_t2.at(y, x, c) + log_epsilon);
      }
  return grads;
}

double prior_l1_loss(const Image& i_e2v, const Image& i_render) {
  require_same_shape(i_e2v, i_render, "prior_l1_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < i_e2v.data.size(); ++i)
    acc += std::abs(i_e2v.data[i] - i_render.data[i]);
  return acc / static_cast<double>(i_e2v.data.size());
}

Image prior_l1_backward(const Image& i_e2v, const Image& i_render) {
  require_same_shape(i_e2v, i_render, "prior_l1_loss");
  Image grad(i_render.height, i_render.width, i_render.channels);
  const double inv_n = 1.0 / static_cast<double>(i_render.data.size());
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    const double diff = i_render.data[i] - i_e2v.data[i];
    grad.data[i] = diff > 0.0 ? inv_n : (diff < 0.0 ? -inv_n : 0.0);
  }
  return grad;
}

double ssim(const Image& a, const Image& b) {
  check_ssim_args(a, b);
  double acc = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels; ++c) {
    const SsimFields f = ssim_fields(extract_channel(a, c), extract_channel(b, c));
    for (int y = 0; y < f.mu_a.height; ++y)
      for (int x = 0; x < f.mu_a.width; ++x) acc += ssim_map_value(f, y, x);
    count += static_cast<std::size_t>(f.mu_a.height) * f.mu_a.width;
  }
  return acc / static_cast<double>(count);
}

Image ssim_backward(const Image& a, const Image& b) {
  check_ssim_args(a, b);
  const auto& k = ssim_kernel();
  Image grad(a.height, a.width, a.channels);
  const int vh = a.height - kWindow + 1;
  const int vw = a.width - kWindow + 1;
  const double scale = 1.0 / (static_cast<double>(a.channels) * vh * vw);
  for (int c = 0; c < a.channels; ++c) {
    const Plane pa = extract_channel(a, c);
    const Plane pb = extract_channel(b, c);
    const SsimFields f = ssim_fields(pa, pb);
    for (int wy = 0; wy < vh; ++wy)
      for (int wx = 0; wx < vw; ++wx) {
        const double u = f.mu_a.at(wy, wx);
        const double v = f.mu_b.at(wy, wx);
        const double var_a = f.raw_aa.at(wy, wx) - u * u;
        const double var_b = f.raw_bb.at(wy, wx) - v * v;
        const double cov = f.raw_ab.at(wy, wx) - u * v;
        const double n1 = 2.0 * u * v + kC1;
        const double n2 = 2.0 * cov + kC2;
        const double d1 = u * u + v * v + kC1;
        const double d2 = var_a + var_b + kC2;
        const double dd = d1 * d2;
        // Partials of the window's map value with respect to the raw window
        // statistics (mean, raw second moment, raw cross moment) of `a`.
        const double d_mu = 2.0 * v * (n2 - n1) / dd - 2.0 * u * n1 * n2 * (d2 - d1) / (dd * dd);
        const double d_raw_aa = -n1 * n2 / (d1 * d2 * d2);
        const double d_raw_ab = 2.0 * n1 / dd;
        const double su = scale * d_mu;
        const double sp = scale * d_raw_aa;
        const double sr = scale * d_raw_ab;
        for (int ky = 0; ky < kWindow; ++ky) {
          const int y = wy + ky;
          for (int kx = 0; kx < kWindow; ++kx) {
            const int x = wx + kx;
            const double kw = k[ky] * k[kx];
            grad.at(y, x, c) += kw * (su + sp * 2.0 * pa.at(y, x) + sr * pb.at(y, x));
          }
        }
      }
  }
  return grad;
}

double reg_loss(const Image& i_e2v, const Image& i_render) {
  return 1.0 - ssim(i_e2v, i_render);
}

Image reg_loss_backward(const Image& i_e2v, const Image& i_render) {
  Image grad = ssim_backward(i_render, i_e2v);
  for (double& g : grad.data) g = -g;
  return grad;
}

double total_loss(double event_value, double reg_value, const LossWeights& weights) {
  return weights.lambda_event * event_value + weights.lambda_reg * reg_value;
}

AlignedImage log_affine_align(const Image& pred, const Image& ref, double log_epsilon) {
  require_same_shape(pred, ref, "log_affine_align");
  AlignedImage out;
  out.image = Image(pred.height, pred.width, pred.channels);
  out.log_gain.assign(pred.channels, 1.0);
  out.log_offset.assign(pred.channels, 0.0);
  const std::size_t n = static_cast<std::size_t>(pred.height) * pred.width;
  std::vector<double> lx(n), ly(n);
  for (int c = 0; c < pred.channels; ++c) {
    std::size_t i = 0;
    double sx = 0.0, sy = 0.0;
    for (int y = 0; y < pred.height; ++y)
      for (int x = 0; x < pred.width; ++x, ++i) {
        lx[i] = std::log(pred.at(y, x, c) + log_epsilon);
        ly[i] = std::log(ref.at(y, x, c) + log_epsilon);
        sx += lx[i];
        sy += ly[i];
      }
    const double mean_x = sx / n;
    const double mean_y = sy / n;
    double var_x = 0.0, cov_xy = 0.0;
    for (i = 0; i < n; ++i) {
      var_x += (lx[i] - mean_x) * (lx[i] - mean_x);
      cov_xy += (lx[i] - mean_x) * (ly[i] - mean_y);
    }
    double a, b;
    if (var_x / n < 1e-18) {
      out.degenerate = true;
      a = 0.0;
      b = mean_y;
    } else {
      a = cov_xy / var_x;
      b = mean_y - a * mean_x;
    }
    out.log_gain[c] = a;
    out.log_offset[c] = b;
    for (int y = 0; y < pred.height; ++y)
      for (int x = 0; x < pred.width; ++x) {
        const double lx = std::log(pred.at(y, x, c) + log_epsilon);
        const double val = std::exp(a * lx + b) - log_epsilon;
        out.image.at(y, x, c) = std::clamp(val, 0.0, 1.0);
      }
  }
  return out;
}

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.data.size());
  if (mse <= 1e-10) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

}  // namespace evgs

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evgs/event_io.hpp"
#include "evgs/image.hpp"

namespace evgs {

struct LossWeights {
  double lambda_event = 0.02;
  double lambda_reg = 0.002;
  double log_epsilon = 1e-3;
};

struct LossReport {
  std::int64_t iteration = 0;
  double event_loss = 0.0;
  double reg_loss = 0.0;
  double prior_l1 = 0.0;
  double total = 0.0;
};

// One JSON-lines record: {"iter":n,"event":x,"reg":y,"prior_l1":z,"total":w}
std::string to_json_line(const LossReport& report);

enum class EventLossMode { Luminance, PerChannel };

// Mean squared residual between the rendered log-brightness change and the
// accumulated event frame: mean_p (log(lum(I_t2)+eps) - log(lum(I_t1)+eps) - E_p)^2.
double event_loss(const Image& i_t1, const Image& i_t2, const EventFrame& events,
                  double log_epsilon = 1e-3, EventLossMode mode = EventLossMode::Luminance);

struct ImagePairGrads {
  Image d_first;
  Image d_second;
};

ImagePairGrads event_loss_backward(const Image& i_t1, const Image& i_t2, const EventFrame& events,
                                   double log_epsilon = 1e-3,
                                   EventLossMode mode = EventLossMode::Luminance);

// Mean absolute per-channel difference.
double prior_l1_loss(const Image& i_e2v, const Image& i_render);

// d prior_l1 / d i_render. Zero where the entries tie.
Image prior_l1_backward(const Image& i_e2v, const Image& i_render);

// Mean local SSIM, 11x11 Gaussian window (std 1.5), C1=0.01^2, C2=0.03^2,
// dynamic range 1. Windows are fully interior (valid placement only), so the
// result is exact on constant images. Per channel, then averaged.
double ssim(const Image& a, const Image& b);

// d ssim(a, b) / d a. For the other side use symmetry: ssim_backward(b, a).
Image ssim_backward(const Image& a, const Image& b);

// 1 - ssim, in [0, 2].
double reg_loss(const Image& i_e2v, const Image& i_render);

// d reg_loss / d i_render.
Image reg_loss_backward(const Image& i_e2v, const Image& i_render);

double total_loss(double event_value, double reg_value, const LossWeights& weights);

struct AlignedImage {
  Image image;
  std::vector<double> log_gain;    // per-channel a
  std::vector<double> log_offset;  // per-channel b
  bool degenerate = false;         // constant prediction in some channel
};

// Per-channel least squares (a, b) minimizing sum (a*log(pred+eps) + b - log(ref+eps))^2,
// applied as exp(a*log(pred+eps) + b) - eps, clamped to [0,1]. A constant
// prediction channel degenerates to the best constant fit.
AlignedImage log_affine_align(const Image& pred, const Image& ref, double log_epsilon = 1e-3);

// 10*log10(1/MSE) over [0,1] images, capped at 100 dB.
double psnr(const Image& a, const Image& b);

}  // namespace evgs

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace evgs {

/// Dense row-major image, values expected in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  std::size_t size() const { return data.size(); }
};

/// Rec.601 luminance of a pixel; single-channel images pass through.
double luminance(const Image& img, int y, int x);

// PNG IO: 8-bit, values scaled by 255 and rounded half-up on write.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Raw float32 row-major little-endian, no header; reader needs the shape.
void write_raw_f32(const std::string& path, const Image& img);
Image read_raw_f32(const std::string& path, int height, int width, int channels);

}  // namespace evgs

#include "evgs/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "evgs/errors.hpp"

namespace evgs {

double luminance(const Image& img, int y, int x) {
  if (img.channels == 1) return img.at(y, x, 0);
  return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

void write_png(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw IoError("write_png: unsupported channel count " + std::to_string(img.channels));
  cv::Mat mat(img.height, img.width, img.channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    uint8_t* row = mat.ptr<uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        // round half-up, clamped; OpenCV stores BGR
        const int src_c = img.channels == 3 ? 2 - c : c;
        double v = std::floor(img.at(y, x, src_c) * 255.0 + 0.5);
        if (v < 0.0) v = 0.0;
        if (v > 255.0) v = 255.0;
        row[x * img.channels + c] = static_cast<uint8_t>(v);
      }
    }
  }
  if (!cv::imwrite(path, mat)) throw IoError("write_png: failed to write " + path);
}

Image read_png(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw IoError("read_png: failed to read " + path);
  if (mat.depth() != CV_8U) throw IoError("read_png: only 8-bit images supported: " + path);
  const int chans = mat.channels();
  if (chans != 1 && chans != 3 && chans != 4)
    throw IoError("read_png: unsupported channel count in " + path);
  const int out_chans = chans == 1 ? 1 : 3;
  Image img(mat.rows, mat.cols, out_chans);
  for (int y = 0; y < mat.rows; ++y) {
    const uint8_t* row = mat.ptr<uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) {
      for (int c = 0; c < out_chans; ++c) {
        const int src_c = out_chans == 3 ? 2 - c : c;  // BGR(A) -> RGB
        img.at(y, x, c) = row[x * chans + src_c] / 255.0;
      }
    }
  }
  return img;
}

void write_raw_f32(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_raw_f32: cannot open " + path);
  for (double v : img.data) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
  if (!out) throw IoError("write_raw_f32: write failed for " + path);
}

Image read_raw_f32(const std::string& path, int height, int width, int channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_raw_f32: cannot open " + path);
  Image img(height, width, channels);
  for (double& v : img.data) {
    float f = 0.0f;
    in.read(reinterpret_cast<char*>(&f), sizeof(f));
    if (!in) throw IoError("read_raw_f32: truncated file " + path);
    v = f;
  }
  return img;
}

}  // namespace evgs

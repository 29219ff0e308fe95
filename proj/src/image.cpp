#include "lightattack/image.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lightattack {

ImageBuffer::ImageBuffer(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("image dimensions must be positive");
  }
  values_.assign(pixel_count() * kChannels, 0.0);
}

ImageBuffer::ImageBuffer(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("image dimensions must be positive");
  }
  if (values_.size() != pixel_count() * kChannels) {
    throw std::invalid_argument("image value count " + std::to_string(values_.size()) +
                                " does not match " + std::to_string(width) + "x" +
                                std::to_string(height) + "x3");
  }
  for (double x : values_) {
    if (!(x >= 0.0 && x <= 1.0)) {
      throw std::invalid_argument("image value outside [0, 1]");
    }
  }
}

void ImageBuffer::set(int u, int v, int c, double value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw std::invalid_argument("image value outside [0, 1]");
  }
  values_[index(u, v, c)] = value;
}

double ImageBuffer::luminance(int u, int v) const {
  const std::size_t i = index(u, v, 0);
  return kLumaR * values_[i] + kLumaG * values_[i + 1] + kLumaB * values_[i + 2];
}

ImageBuffer quantize8(const ImageBuffer& img) {
  std::vector<double> out(img.values().begin(), img.values().end());
  for (double& x : out) {
    x = std::floor(x * 255.0 + 0.5) / 255.0;
  }
  return ImageBuffer(img.width(), img.height(), std::move(out));
}

}  // namespace lightattack

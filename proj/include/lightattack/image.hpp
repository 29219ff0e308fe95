#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lightattack {

/// H x W x 3 image, interleaved RGB, every value in [0, 1].
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;

  /// Black image.
  ImageBuffer(int width, int height);
  /// Takes ownership of interleaved values; throws std::invalid_argument when the
  /// size is wrong or any value is outside [0, 1].
  ImageBuffer(int width, int height, std::vector<double> values);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  double at(int u, int v, int c) const { return values_[index(u, v, c)]; }
  void set(int u, int v, int c, double value);

  /// Rec.709 luma of pixel (u, v).
  double luminance(int u, int v) const;

  std::span<const double> values() const { return values_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int u, int v, int c) const {
    return (static_cast<std::size_t>(v) * width_ + u) * kChannels + c;
  }

  int width_;
  int height_;
  std::vector<double> values_;
};

/// Luma weights; they sum to one so a uniform shift moves luma by the same amount.
inline constexpr double kLumaR = 0.2126;
inline constexpr double kLumaG = 0.7152;
inline constexpr double kLumaB = 0.0722;

/// Quantizes to 8 bits (round half up) and back.
ImageBuffer quantize8(const ImageBuffer& img);

}  // namespace lightattack

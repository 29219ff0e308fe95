#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lightattack/image.hpp"

namespace lightattack {

/// Position in pixel units; origin top-left, x right, y down.
struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// One Gaussian point light. Coordinates are unconstrained; intensity >= 0, radius > 0.
class LightSource {
 public:
  LightSource(double x, double y, double intensity, double radius);

  double x() const { return x_; }
  double y() const { return y_; }
  double intensity() const { return intensity_; }
  double radius() const { return radius_; }

  friend bool operator==(const LightSource&, const LightSource&) = default;

 private:
  double x_;
  double y_;
  double intensity_;
  double radius_;
};

/// Ordered set of point lights. Flat layout is (x1, y1, I1, r1, ..., xN, yN, IN, rN).
class LightingConfig {
 public:
  static constexpr std::size_t kParamsPerLight = 4;

  LightingConfig() = default;
  explicit LightingConfig(std::vector<LightSource> sources) : sources_(std::move(sources)) {}

  /// Throws std::invalid_argument when the length is not a multiple of 4 or a light is invalid.
  static LightingConfig from_flat(std::span<const double> flat);
  std::vector<double> to_flat() const;

  std::size_t size() const { return sources_.size(); }
  bool empty() const { return sources_.empty(); }
  const std::vector<LightSource>& sources() const { return sources_; }

  /// Concatenation of both source lists.
  LightingConfig merged(const LightingConfig& other) const;

  friend bool operator==(const LightingConfig&, const LightingConfig&) = default;

 private:
  std::vector<LightSource> sources_;
};

/// Per-pixel light field F, unclamped and nonnegative.
struct LightMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major

  double at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
};

struct RenderParams {
  static constexpr double kDefaultAmbientGain = 0.6;
  static constexpr double kHighlightClamp = 1.0;

  double ambient_gain = kDefaultAmbientGain;

  /// Throws std::invalid_argument unless ambient_gain is in [0, 2].
  void validate() const;
};

/// F(z) = sum_i I_i * exp(-|z - c_i|^2 / (2 r_i^2)).
double illuminance_at(const LightingConfig& cfg, Point z);

/// Samples F at pixel centers (u + 0.5, v + 0.5). Parallel over rows.
LightMap render_light_map(const LightingConfig& cfg, int width, int height);

/// out = min(1, img * (ambient_gain + F)). Parallel over rows.
ImageBuffer relight(const ImageBuffer& img, const LightingConfig& cfg, const RenderParams& params);

/// 8-bit grayscale export of a light map: round_half_up(min(1, F) * 255).
std::vector<std::uint8_t> light_map_to_gray8(const LightMap& map);

namespace reference {

// Serial per-pixel loops over illuminance_at. Kept as oracles for the kernels above.
LightMap render_light_map(const LightingConfig& cfg, int width, int height);
ImageBuffer relight(const ImageBuffer& img, const LightingConfig& cfg, const RenderParams& params);

}  // namespace reference

}  // namespace lightattack

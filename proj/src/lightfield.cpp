#include "lightattack/lightfield.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lightattack {

LightSource::LightSource(double x, double y, double intensity, double radius)
    : x_(x), y_(y), intensity_(intensity), radius_(radius) {
  if (!std::isfinite(x) || !std::isfinite(y)) {
    throw std::invalid_argument("light position must be finite");
  }
  if (!(intensity >= 0.0) || !std::isfinite(intensity)) {
    throw std::invalid_argument("light intensity must be finite and >= 0");
  }
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("light radius must be finite and > 0");
  }
}

LightingConfig LightingConfig::from_flat(std::span<const double> flat) {
  if (flat.size() % kParamsPerLight != 0) {
    throw std::invalid_argument("flat light vector length " + std::to_string(flat.size()) +
                                " is not a multiple of 4");
  }
  std::vector<LightSource> sources;
  sources.reserve(flat.size() / kParamsPerLight);
  for (std::size_t i = 0; i < flat.size(); i += kParamsPerLight) {
    sources.emplace_back(flat[i], flat[i + 1], flat[i + 2], flat[i + 3]);
  }
  return LightingConfig(std::move(sources));
}

std::vector<double> LightingConfig::to_flat() const {
  std::vector<double> flat;
  flat.reserve(sources_.size() * kParamsPerLight);
  for (const auto& s : sources_) {
    flat.insert(flat.end(), {s.x(), s.y(), s.intensity(), s.radius()});
  }
  return flat;
}

LightingConfig LightingConfig::merged(const LightingConfig& other) const {
  std::vector<LightSource> all = sources_;
  all.insert(all.end(), other.sources_.begin(), other.sources_.end());
  return LightingConfig(std::move(all));
}

void RenderParams::validate() const {
  if (!(ambient_gain >= 0.0 && ambient_gain <= 2.0)) {
    throw std::invalid_argument("ambient_gain must lie in [0, 2]");
  }
}

double illuminance_at(const LightingConfig& cfg, Point z) {
  double total = 0.0;
  for (const auto& s : cfg.sources()) {
    const double dx = z.x - s.x();
    const double dy = z.y - s.y();
    total += s.intensity() * std::exp(-(dx * dx + dy * dy) / (2.0 * s.radius() * s.radius()));
  }
  return total;
}

namespace {

void check_dims(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("light map dimensions must be positive");
  }
}

// Same arithmetic, in the same order, as illuminance_at; only the per-light
// denominator is hoisted.
struct PackedLight {
  double x, y, intensity, denom;
};

std::vector<PackedLight> pack(const LightingConfig& cfg) {
  std::vector<PackedLight> out;
  out.reserve(cfg.size());
  for (const auto& s : cfg.sources()) {
    out.push_back({s.x(), s.y(), s.intensity(), 2.0 * s.radius() * s.radius()});
  }
  return out;
}

inline double field(const std::vector<PackedLight>& lights, double zx, double zy) {
  double total = 0.0;
  for (const auto& l : lights) {
    const double dx = zx - l.x;
    const double dy = zy - l.y;
    total += l.intensity * std::exp(-(dx * dx + dy * dy) / l.denom);
  }
  return total;
}

}  // namespace

LightMap render_light_map(const LightingConfig& cfg, int width, int height) {
  check_dims(width, height);
  LightMap map{width, height, std::vector<double>(static_cast<std::size_t>(width) * height)};
  const auto lights = pack(cfg);
  double* out = map.values.data();
#pragma omp parallel for schedule(static)
  for (int v = 0; v < height; ++v) {
    const double zy = v + 0.5;
    double* row = out + static_cast<std::size_t>(v) * width;
    for (int u = 0; u < width; ++u) {
      row[u] = field(lights, u + 0.5, zy);
    }
  }
  return map;
}

ImageBuffer relight(const ImageBuffer& img, const LightingConfig& cfg, const RenderParams& params) {
  params.validate();
  const int width = img.width();
  const int height = img.height();
  const auto lights = pack(cfg);
  const double ambient = params.ambient_gain;
  std::span<const double> in = img.values();
  std::vector<double> out(in.size());
#pragma omp parallel for schedule(static)
  for (int v = 0; v < height; ++v) {
    const double zy = v + 0.5;
    for (int u = 0; u < width; ++u) {
      const double gain = ambient + field(lights, u + 0.5, zy);
      const std::size_t base = (static_cast<std::size_t>(v) * width + u) * ImageBuffer::kChannels;
      for (int c = 0; c < ImageBuffer::kChannels; ++c) {
        out[base + c] = std::min(RenderParams::kHighlightClamp, in[base + c] * gain);
      }
    }
  }
  return ImageBuffer(width, height, std::move(out));
}

std::vector<std::uint8_t> light_map_to_gray8(const LightMap& map) {
  std::vector<std::uint8_t> out(map.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double f = std::min(1.0, map.values[i]);
    out[i] = static_cast<std::uint8_t>(std::floor(f * 255.0 + 0.5));
  }
  return out;
}

namespace reference {

LightMap render_light_map(const LightingConfig& cfg, int width, int height) {
  check_dims(width, height);
  LightMap map{width, height, std::vector<double>(static_cast<std::size_t>(width) * height)};
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      map.values[static_cast<std::size_t>(v) * width + u] = illuminance_at(cfg, {u + 0.5, v + 0.5});
    }
  }
  return map;
}

ImageBuffer relight(const ImageBuffer& img, const LightingConfig& cfg, const RenderParams& params) {
  params.validate();
  ImageBuffer out(img.width(), img.height());
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      const double gain = params.ambient_gain + illuminance_at(cfg, {u + 0.5, v + 0.5});
      for (int c = 0; c < ImageBuffer::kChannels; ++c) {
        out.set(u, v, c, std::min(1.0, img.at(u, v, c) * gain));
      }
    }
  }
  return out;
}

}  // namespace reference

}  // namespace lightattack

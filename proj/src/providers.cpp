#include "lightattack/providers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lightattack {

namespace {

std::vector<double> luma_plane(const ImageBuffer& img) {
  std::vector<double> out(img.pixel_count());
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      out[static_cast<std::size_t>(v) * img.width() + u] = img.luminance(u, v);
    }
  }
  return out;
}

// Central differences with replicated borders, so mirroring the plane mirrors
// and negates the result.
void central_differences(const std::vector<double>& plane, int width, int height,
                         std::vector<double>& dx, std::vector<double>& dy) {
  dx.assign(plane.size(), 0.0);
  dy.assign(plane.size(), 0.0);
  auto at = [&](int u, int v) { return plane[static_cast<std::size_t>(v) * width + u]; };
  for (int v = 0; v < height; ++v) {
    const int vp = std::min(v + 1, height - 1);
    const int vm = std::max(v - 1, 0);
    for (int u = 0; u < width; ++u) {
      const int up = std::min(u + 1, width - 1);
      const int um = std::max(u - 1, 0);
      const std::size_t i = static_cast<std::size_t>(v) * width + u;
      dx[i] = (at(up, v) - at(um, v)) / 2.0;
      dy[i] = (at(u, vp) - at(u, vm)) / 2.0;
    }
  }
}

struct Span1D {
  int begin;
  int end;
};

// Cell k of n along an axis of the given length; never empty.
Span1D cell_range(int k, int n, int length) {
  const int b = std::min(length - 1, k * length / n);
  const int e = std::max(b + 1, (k + 1) * length / n);
  return {b, e};
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in (0, 1].
double unit_open(std::uint64_t& state) {
  return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
}

void normalize(Embedding& e) {
  double s = 0.0;
  for (double x : e) s += x * x;
  const double n = std::sqrt(s);
  for (double& x : e) x /= n;
}

}  // namespace

Embedding local_embed_image(const ImageBuffer& img) {
  const int W = img.width();
  const int H = img.height();
  const auto luma = luma_plane(img);
  std::vector<double> dx, dy;
  central_differences(luma, W, H, dx, dy);

  Embedding e;
  e.reserve(kLocalEmbeddingDim);
  for (int cy = 0; cy < kEmbedGrid; ++cy) {
    const Span1D rows = cell_range(cy, kEmbedGrid, H);
    for (int cx = 0; cx < kEmbedGrid; ++cx) {
      const Span1D cols = cell_range(cx, kEmbedGrid, W);
      double r = 0.0, g = 0.0, b = 0.0, grad = 0.0;
      for (int v = rows.begin; v < rows.end; ++v) {
        for (int u = cols.begin; u < cols.end; ++u) {
          r += img.at(u, v, 0);
          g += img.at(u, v, 1);
          b += img.at(u, v, 2);
          const std::size_t i = static_cast<std::size_t>(v) * W + u;
          grad += std::sqrt(dx[i] * dx[i] + dy[i] * dy[i]);
        }
      }
      const double n = static_cast<double>(rows.end - rows.begin) * (cols.end - cols.begin);
      e.insert(e.end(), {r / n, g / n, b / n, grad / n});
    }
  }

  for (int qy = 0; qy < 2; ++qy) {
    const Span1D rows = cell_range(qy, 2, H);
    for (int qx = 0; qx < 2; ++qx) {
      const Span1D cols = cell_range(qx, 2, W);
      std::vector<double> bins(kHistogramBins, 0.0);
      for (int v = rows.begin; v < rows.end; ++v) {
        for (int u = cols.begin; u < cols.end; ++u) {
          const double l = luma[static_cast<std::size_t>(v) * W + u];
          const int bin = std::clamp(static_cast<int>(l * kHistogramBins), 0, kHistogramBins - 1);
          bins[bin] += 1.0;
        }
      }
      const double n = static_cast<double>(rows.end - rows.begin) * (cols.end - cols.begin);
      for (double c : bins) e.push_back(c / n);
    }
  }
  normalize(e);
  return e;
}

Embedding local_embed_text(std::string_view label) {
  if (label.empty()) {
    throw std::invalid_argument("cannot embed an empty label");
  }
  std::uint64_t state = fnv1a(label) ^ kTextHashSeed;
  Embedding e;
  e.reserve(kLocalEmbeddingDim);
  while (e.size() < kLocalEmbeddingDim) {
    const double r = std::sqrt(-2.0 * std::log(unit_open(state)));
    const double theta = 2.0 * std::numbers::pi * unit_open(state);
    e.push_back(r * std::cos(theta));
    e.push_back(r * std::sin(theta));
  }
  normalize(e);
  return e;
}

std::vector<Embedding> local_embed_texts(const std::vector<std::string>& labels) {
  if (labels.empty()) {
    throw std::invalid_argument("label list is empty");
  }
  std::vector<Embedding> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(local_embed_text(l));
  return out;
}

std::vector<LayerShape> PyramidFeatureExtractor::layer_shapes(int width, int height) const {
  if (width < kPyramidMinSide || height < kPyramidMinSide) {
    throw std::invalid_argument("pyramid features need at least 8 px per side");
  }
  std::vector<LayerShape> shapes;
  for (int f = 2; f <= 8; f *= 2) {
    shapes.push_back({3, height / f, width / f});
  }
  return shapes;
}

FeatureList pyramid_features(const ImageBuffer& img) {
  const int W = img.width();
  const int H = img.height();
  if (W < kPyramidMinSide || H < kPyramidMinSide) {
    throw std::invalid_argument("pyramid features need at least 8 px per side");
  }
  const auto luma = luma_plane(img);
  FeatureList layers;
  layers.reserve(kPyramidLayers);
  for (int f = 2; f <= 8; f *= 2) {
    const int w = W / f;
    const int h = H / f;
    std::vector<double> down(static_cast<std::size_t>(w) * h, 0.0);
    const double inv_area = 1.0 / (f * f);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        double s = 0.0;
        for (int j = 0; j < f; ++j) {
          const std::size_t row = static_cast<std::size_t>(v * f + j) * W;
          for (int i = 0; i < f; ++i) s += luma[row + u * f + i];
        }
        down[static_cast<std::size_t>(v) * w + u] = s * inv_area;
      }
    }
    std::vector<double> dx, dy;
    central_differences(down, w, h, dx, dy);
    const double scale = 1.0 / std::sqrt(static_cast<double>(w) * h);
    FeatureLayer layer;
    layer.reserve(down.size() * 3);
    for (double x : down) layer.push_back(x * scale);
    for (double x : dx) layer.push_back(x * scale);
    for (double x : dy) layer.push_back(x * scale);
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace lightattack

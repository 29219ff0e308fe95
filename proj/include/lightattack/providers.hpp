#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lightattack/image.hpp"
#include "lightattack/objective.hpp"

namespace lightattack {

struct ProviderInfo {
  std::string name;
  std::size_t embedding_dim = 0;
};

/// Victim model seen as an image encoder plus a text encoder.
///
/// Implementations must be deterministic and safe to call concurrently; both
/// methods return vectors of exactly info().embedding_dim entries.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual ProviderInfo info() const = 0;
  virtual Embedding embed_image(const ImageBuffer& img) const = 0;
  virtual std::vector<Embedding> embed_texts(const std::vector<std::string>& labels) const = 0;
};

struct LayerShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t element_count() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Multi-layer feature map used by the perceptual term.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t layer_count() const = 0;
  virtual std::vector<LayerShape> layer_shapes(int width, int height) const = 0;
  virtual FeatureList extract(const ImageBuffer& img) const = 0;
};

inline constexpr std::size_t kLocalEmbeddingDim = 96;
inline constexpr int kEmbedGrid = 4;
inline constexpr int kHistogramBins = 8;
inline constexpr std::uint64_t kTextHashSeed = 0x1ab3c5d7e9f20468ULL;

/// 4x4 grid of (mean R, mean G, mean B, mean luma gradient magnitude), then an
/// 8-bin luma histogram per quadrant (TL, TR, BL, BR), L2-normalized.
Embedding local_embed_image(const ImageBuffer& img);

/// Seeded FNV-1a hash of the label expanded through splitmix64 + Box-Muller
/// into 96 Gaussian coordinates, L2-normalized. Throws on an empty label.
Embedding local_embed_text(std::string_view label);
std::vector<Embedding> local_embed_texts(const std::vector<std::string>& labels);

class LocalProvider final : public EmbeddingProvider {
 public:
  ProviderInfo info() const override { return {"local", kLocalEmbeddingDim}; }
  Embedding embed_image(const ImageBuffer& img) const override { return local_embed_image(img); }
  std::vector<Embedding> embed_texts(const std::vector<std::string>& labels) const override {
    return local_embed_texts(labels);
  }
};

inline constexpr int kPyramidLayers = 3;
inline constexpr int kPyramidMinSide = 8;

/// Three layers: luma box-downsampled by 2, 4 and 8, each followed by its
/// horizontal and vertical central-difference channels (replicated borders).
/// Layer values are scaled by 1/sqrt(layer height * layer width).
FeatureList pyramid_features(const ImageBuffer& img);

class PyramidFeatureExtractor final : public FeatureExtractor {
 public:
  std::size_t layer_count() const override { return kPyramidLayers; }
  std::vector<LayerShape> layer_shapes(int width, int height) const override;
  FeatureList extract(const ImageBuffer& img) const override { return pyramid_features(img); }
};

}  // namespace lightattack

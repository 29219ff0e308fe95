#pragma once

#include <cstdint>
#include <vector>

#include "lightattack/image.hpp"
#include "lightattack/providers.hpp"

namespace lightattack {

inline constexpr int kSuiteSize = 50;
inline constexpr int kSuiteSide = 64;
inline constexpr std::uint64_t kSuiteSeed = 20250101;

/// Two-tone image: a random straight edge splits the frame into two flat colors,
/// each channel drawn from [0.05, 0.6].
ImageBuffer two_tone_image(int width, int height, std::uint64_t seed);

struct SuiteItem {
  ImageBuffer image;
  std::size_t truth_index = 0;
};

/// The bundled evaluation suite. Each image's truth label is the provider's
/// clean top-1 prediction over `labels`, so every item starts correctly classified.
std::vector<SuiteItem> synthetic_suite(const EmbeddingProvider& provider,
                                       const std::vector<std::string>& labels,
                                       int count = kSuiteSize, int side = kSuiteSide,
                                       std::uint64_t seed = kSuiteSeed);

}  // namespace lightattack

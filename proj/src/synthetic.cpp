#include "lightattack/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "lightattack/objective.hpp"

namespace lightattack {

ImageBuffer two_tone_image(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Under-lit tones leave headroom below the highlight clamp.
  std::uniform_real_distribution<double> tone(0.05, 0.6);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::uniform_real_distribution<double> offset(-0.25, 0.25);

  const double a[3] = {tone(rng), tone(rng), tone(rng)};
  const double b[3] = {tone(rng), tone(rng), tone(rng)};
  const double theta = angle(rng);
  const double nx = std::cos(theta);
  const double ny = std::sin(theta);
  const double cx = width * (0.5 + offset(rng));
  const double cy = height * (0.5 + offset(rng));

  ImageBuffer img(width, height);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const double side = (u + 0.5 - cx) * nx + (v + 0.5 - cy) * ny;
      const double* c = side >= 0.0 ? a : b;
      for (int k = 0; k < 3; ++k) img.set(u, v, k, c[k]);
    }
  }
  return img;
}

std::vector<SuiteItem> synthetic_suite(const EmbeddingProvider& provider,
                                       const std::vector<std::string>& labels, int count, int side,
                                       std::uint64_t seed) {
  const auto text = provider.embed_texts(labels);
  std::vector<SuiteItem> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    ImageBuffer img = two_tone_image(side, side, seed + static_cast<std::uint64_t>(i));
    const auto sim = similarity_vector(provider.embed_image(img), text);
    out.push_back({std::move(img), argmax(sim)});
  }
  return out;
}

}  // namespace lightattack

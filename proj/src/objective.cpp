#include "lightattack/objective.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace lightattack {

LabelSet::LabelSet(std::vector<std::string> labels, std::size_t truth_index)
    : labels_(std::move(labels)), truth_index_(truth_index) {
  if (labels_.size() < 2) {
    throw std::invalid_argument("a label set needs at least two labels");
  }
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (l.empty()) {
      throw std::invalid_argument("labels must be non-empty");
    }
    if (!seen.insert(l).second) {
      throw std::invalid_argument("duplicate label '" + l + "'");
    }
  }
  if (truth_index_ >= labels_.size()) {
    throw std::invalid_argument("truth index out of range");
  }
}

std::optional<std::size_t> LabelSet::index_of(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - labels_.begin());
}

void LossWeights::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(dist_threshold)) {
    throw std::invalid_argument("loss weights must be finite");
  }
  if (alpha < 0.0 || beta < 0.0 || dist_threshold < 0.0) {
    throw std::invalid_argument("loss weights must be >= 0");
  }
}

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::vector<double> similarity_vector(std::span<const double> image_embedding,
                                      const std::vector<Embedding>& text_embeddings) {
  if (image_embedding.empty()) {
    throw std::invalid_argument("image embedding is empty");
  }
  const double img_norm = norm(image_embedding);
  if (!(img_norm > 0.0)) {
    throw std::invalid_argument("image embedding has zero norm");
  }
  std::vector<double> out;
  out.reserve(text_embeddings.size());
  for (const auto& t : text_embeddings) {
    if (t.size() != image_embedding.size()) {
      throw std::invalid_argument("text embedding dimension " + std::to_string(t.size()) +
                                  " != image embedding dimension " +
                                  std::to_string(image_embedding.size()));
    }
    const double t_norm = norm(t);
    if (!(t_norm > 0.0)) {
      throw std::invalid_argument("text embedding has zero norm");
    }
    double dot = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) dot += image_embedding[k] * t[k];
    out.push_back(std::clamp(dot / (img_norm * t_norm), -1.0, 1.0));
  }
  return out;
}

double adversarial_loss(std::span<const double> v, std::size_t truth_index) {
  if (truth_index >= v.size()) {
    throw std::invalid_argument("truth index out of range");
  }
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return (m + std::log(sum)) - v[truth_index];
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) return {};
  const double m = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) {
    throw std::invalid_argument("argmax of an empty vector");
  }
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double perceptual_loss(const FeatureList& a, const FeatureList& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("feature lists have different layer counts");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].size() != b[l].size()) {
      throw std::invalid_argument("feature layer " + std::to_string(l) + " shape mismatch");
    }
    for (std::size_t k = 0; k < a[l].size(); ++k) {
      const double d = a[l][k] - b[l][k];
      total += d * d;
    }
  }
  return total;
}

double distance_loss(const LightingConfig& cfg, double dist_threshold) {
  const auto& s = cfg.sources();
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const double dx = s[i].x() - s[j].x();
      const double dy = s[i].y() - s[j].y();
      const double d = std::sqrt(dx * dx + dy * dy);
      total += std::max(0.0, dist_threshold - d);
    }
  }
  return total;
}

double fitness(double adv, double pecp, double dis, const LossWeights& weights) {
  if (!std::isfinite(adv) || !std::isfinite(pecp) || !std::isfinite(dis)) {
    throw std::invalid_argument("loss terms must be finite");
  }
  return -adv + weights.alpha * pecp + weights.beta * dis;
}

LossBreakdown make_breakdown(double adv, double pecp, double dis, const LossWeights& weights) {
  return {adv, pecp, dis, fitness(adv, pecp, dis, weights)};
}

}  // namespace lightattack

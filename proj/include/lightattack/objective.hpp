#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lightattack/lightfield.hpp"

namespace lightattack {

/// Candidate labels plus the index of the ground-truth label.
class LabelSet {
 public:
  /// Labels must be non-empty and distinct, at least two of them.
  /// Throws std::invalid_argument otherwise or when truth_index is out of range.
  LabelSet(std::vector<std::string> labels, std::size_t truth_index);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t truth_index() const { return truth_index_; }
  const std::string& truth() const { return labels_[truth_index_]; }

  std::optional<std::size_t> index_of(const std::string& label) const;

 private:
  std::vector<std::string> labels_;
  std::size_t truth_index_;
};

struct LossWeights {
  double alpha = 0.1;
  double beta = 0.01;
  double dist_threshold = 50.0;  // pixels

  void validate() const;
};

struct LossBreakdown {
  double adv = 0.0;
  double pecp = 0.0;
  double dis = 0.0;
  double fitness = 0.0;  // ranked scalar, lower is better
};

using Embedding = std::vector<double>;
using FeatureLayer = std::vector<double>;
using FeatureList = std::vector<FeatureLayer>;

/// Cosine similarity of the image embedding against each text embedding.
std::vector<double> similarity_vector(std::span<const double> image_embedding,
                                      const std::vector<Embedding>& text_embeddings);

/// -log softmax(v)[truth_index], stabilized by max subtraction.
double adversarial_loss(std::span<const double> v, std::size_t truth_index);

std::vector<double> softmax(std::span<const double> v);

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> v);

/// Sum over layers of squared Euclidean feature distance.
double perceptual_loss(const FeatureList& a, const FeatureList& b);

/// Pairwise hinge sum_{i<j} max(0, threshold - |p_i - p_j|) over light positions.
double distance_loss(const LightingConfig& cfg, double dist_threshold);

/// -adv + alpha * pecp + beta * dis. Throws std::invalid_argument on non-finite input.
double fitness(double adv, double pecp, double dis, const LossWeights& weights);

LossBreakdown make_breakdown(double adv, double pecp, double dis, const LossWeights& weights);

}  // namespace lightattack

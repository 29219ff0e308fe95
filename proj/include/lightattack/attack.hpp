#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lightattack/cmaes.hpp"
#include "lightattack/image.hpp"
#include "lightattack/lightfield.hpp"
#include "lightattack/objective.hpp"
#include "lightattack/providers.hpp"

namespace lightattack {

enum class ProviderKind { local, remote };

struct AttackConfig {
  int n_lights = 3;
  int population = 20;
  int max_iters = 200;
  int patience = 50;
  double min_delta = 1e-6;
  double alpha = 0.1;
  double beta = 0.01;
  double dist_threshold = 50.0;
  double ambient_gain = RenderParams::kDefaultAmbientGain;
  std::uint64_t seed = 0;
  bool lra = false;
  int workers = 1;
  ProviderKind provider = ProviderKind::local;
  std::string endpoint;

  void validate() const;
  LossWeights weights() const { return {alpha, beta, dist_threshold}; }
  RenderParams render_params() const { return {ambient_gain}; }
  StopCriteria stop_criteria() const { return {max_iters, patience, min_delta}; }
};

struct Prediction {
  std::size_t index = 0;
  std::string label;
  double similarity = 0.0;
};

struct IterationRecord {
  int iter = 0;
  double best_fitness = 0.0;
  LossBreakdown best;  // loss terms of the best-so-far candidate
  double sigma = 0.0;
  std::vector<double> mean;
  std::vector<double> cov_diag;
};

struct AttackResult {
  LightingConfig lambda_star;  // best candidate seen
  LightingConfig lambda_mean;  // squashed final distribution mean (empty for the baseline)
  ImageBuffer adversarial{1, 1};
  LossBreakdown best_loss;
  std::vector<IterationRecord> trajectory;
  Prediction clean;
  Prediction adversarial_prediction;
  bool success = false;
  long evaluations = 0;
  long faults = 0;
  StopReason stop_reason = StopReason::none;
  double wall_ms = 0.0;
};

/// Loop invariants of one attack run: cached text embeddings and clean features.
class AttackContext {
 public:
  /// Embeds the label texts and extracts clean-image features once.
  AttackContext(const ImageBuffer& image, const LabelSet& labels, const AttackConfig& config,
                const EmbeddingProvider& provider, const FeatureExtractor& features);

  const ImageBuffer& image() const { return image_; }
  const LabelSet& labels() const { return labels_; }
  const std::vector<Embedding>& text_embeddings() const { return text_embeddings_; }
  const FeatureList& clean_features() const { return clean_features_; }
  const BoxBounds& bounds() const { return bounds_; }
  const BoxTransform& transform() const { return transform_; }
  const LossWeights& weights() const { return weights_; }
  const RenderParams& render_params() const { return render_params_; }
  const EmbeddingProvider& provider() const { return provider_; }
  const FeatureExtractor& features() const { return features_; }

 private:
  const ImageBuffer& image_;
  const LabelSet& labels_;
  const EmbeddingProvider& provider_;
  const FeatureExtractor& features_;
  std::vector<Embedding> text_embeddings_;
  FeatureList clean_features_;
  BoxBounds bounds_;
  BoxTransform transform_;
  LossWeights weights_;
  RenderParams render_params_;
};

struct CandidateEval {
  LossBreakdown loss;
  std::vector<double> similarity;
};

/// relight -> embed -> similarity -> adversarial/perceptual/distance terms -> fitness.
CandidateEval evaluate_config(const AttackContext& ctx, const LightingConfig& cfg);
/// Squashes q into the box first.
LossBreakdown evaluate_candidate(const AttackContext& ctx, std::span<const double> q);

Prediction predict(const std::vector<double>& similarity, const LabelSet& labels);
/// Zero-shot prediction of an image against the context's label embeddings.
Prediction classify(const AttackContext& ctx, const ImageBuffer& img);

struct AttackHooks {
  /// Called with the best image so far every `snapshot_every` iterations.
  int snapshot_every = 0;
  std::function<void(int iteration, const ImageBuffer& best)> on_snapshot;
};

/// Fraction of faulted candidates in one generation above which the run aborts.
inline constexpr double kMaxFaultFraction = 0.25;

AttackResult run_attack(const ImageBuffer& image, const LabelSet& labels, const AttackConfig& config,
                        const EmbeddingProvider& provider, const FeatureExtractor& features,
                        const AttackHooks& hooks = {});

/// Uniform draws inside the attack bounds; keeps the lowest fitness.
AttackResult run_random_baseline(const ImageBuffer& image, const LabelSet& labels,
                                 const AttackConfig& config, int n_draws,
                                 const EmbeddingProvider& provider, const FeatureExtractor& features);

}  // namespace lightattack

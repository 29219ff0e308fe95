#include "lightattack/attack.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <stdexcept>

#include "lightattack/errors.hpp"

namespace lightattack {

void AttackConfig::validate() const {
  if (n_lights < 1) throw std::invalid_argument("n_lights must be >= 1");
  if (population < 2) throw std::invalid_argument("population must be >= 2");
  if (max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (!(min_delta >= 0.0)) throw std::invalid_argument("min_delta must be >= 0");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  weights().validate();
  render_params().validate();
  if (provider == ProviderKind::remote && endpoint.empty()) {
    throw std::invalid_argument("remote provider needs an endpoint");
  }
}

AttackContext::AttackContext(const ImageBuffer& image, const LabelSet& labels,
                             const AttackConfig& config, const EmbeddingProvider& provider,
                             const FeatureExtractor& features)
    : image_(image),
      labels_(labels),
      provider_(provider),
      features_(features),
      text_embeddings_(provider.embed_texts(labels.labels())),
      clean_features_(features.extract(image)),
      bounds_(bounds_for_attack(image.width(), image.height(), config.n_lights)),
      transform_(BoxTransform::from_bounds(bounds_)),
      weights_(config.weights()),
      render_params_(config.render_params()) {
  if (text_embeddings_.size() != labels.size()) {
    throw ProtocolError("provider returned " + std::to_string(text_embeddings_.size()) +
                        " text embeddings for " + std::to_string(labels.size()) + " labels");
  }
}

CandidateEval evaluate_config(const AttackContext& ctx, const LightingConfig& cfg) {
  const ImageBuffer relit = relight(ctx.image(), cfg, ctx.render_params());
  const Embedding emb = ctx.provider().embed_image(relit);
  CandidateEval out;
  out.similarity = similarity_vector(emb, ctx.text_embeddings());
  const double adv = adversarial_loss(out.similarity, ctx.labels().truth_index());
  const double pecp = perceptual_loss(ctx.clean_features(), ctx.features().extract(relit));
  const double dis = distance_loss(cfg, ctx.weights().dist_threshold);
  out.loss = make_breakdown(adv, pecp, dis, ctx.weights());
  return out;
}

LossBreakdown evaluate_candidate(const AttackContext& ctx, std::span<const double> q) {
  return evaluate_config(ctx, LightingConfig::from_flat(squash(q, ctx.transform()))).loss;
}

Prediction predict(const std::vector<double>& similarity, const LabelSet& labels) {
  const std::size_t i = argmax(similarity);
  return {i, labels.labels()[i], similarity[i]};
}

Prediction classify(const AttackContext& ctx, const ImageBuffer& img) {
  return predict(similarity_vector(ctx.provider().embed_image(img), ctx.text_embeddings()),
                 ctx.labels());
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct Outcome {
  CandidateEval eval;
  bool faulted = false;
  std::exception_ptr error;
};

// Evaluates candidates concurrently; results land at their own index so the
// caller sees the same order for any worker count. Transport failures become
// +inf faults, anything else is rethrown after the parallel region.
std::vector<Outcome> evaluate_all(const AttackContext& ctx, const std::vector<LightingConfig>& configs,
                                  int workers) {
  std::vector<Outcome> out(configs.size());
  const int n = static_cast<int>(configs.size());
#pragma omp parallel for num_threads(workers) schedule(static) if (workers > 1)
  for (int i = 0; i < n; ++i) {
    try {
      out[i].eval = evaluate_config(ctx, configs[i]);
    } catch (const TransportError&) {
      out[i].faulted = true;
      out[i].eval.loss.fitness = std::numeric_limits<double>::infinity();
    } catch (...) {
      out[i].error = std::current_exception();
    }
  }
  for (const auto& o : out) {
    if (o.error) std::rethrow_exception(o.error);
  }
  return out;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

struct BestSoFar {
  double fitness = std::numeric_limits<double>::infinity();
  LightingConfig config;
  CandidateEval eval;
};

void finish(AttackResult& result, const AttackContext& ctx, const BestSoFar& best) {
  result.lambda_star = best.config;
  result.best_loss = best.eval.loss;
  result.adversarial = relight(ctx.image(), best.config, ctx.render_params());
  result.adversarial_prediction = predict(best.eval.similarity, ctx.labels());
  result.success = result.adversarial_prediction.index != ctx.labels().truth_index();
}

}  // namespace

AttackResult run_attack(const ImageBuffer& image, const LabelSet& labels, const AttackConfig& config,
                        const EmbeddingProvider& provider, const FeatureExtractor& features,
                        const AttackHooks& hooks) {
  config.validate();
  const auto start = Clock::now();
  const AttackContext ctx(image, labels, config, provider, features);

  AttackResult result;
  result.clean = classify(ctx, image);
  result.evaluations = 1;

  if (config.max_iters == 0) {
    result.adversarial = image;
    result.adversarial_prediction = result.clean;
    result.success = false;
    result.stop_reason = StopReason::max_iters;
    result.wall_ms = elapsed_ms(start);
    return result;
  }

  const std::size_t dim = ctx.bounds().size();
  CmaEs es(dim, StrategyParams::make(dim, config.population, config.lra), config.stop_criteria(),
           config.seed);
  BestSoFar best;
  std::vector<double> fitness(config.population);
  std::vector<LightingConfig> configs(config.population);

  while (true) {
    const StopDecision decision = es.should_stop();
    if (decision.stop) {
      result.stop_reason = decision.reason;
      break;
    }
    const int iteration = es.state().iteration;
    const Population samples = es.ask();
    for (int i = 0; i < config.population; ++i) {
      configs[i] = LightingConfig::from_flat(
          squash(std::span<const double>(samples[i].data(), samples[i].size()), ctx.transform()));
    }
    const auto outcomes = evaluate_all(ctx, configs, config.workers);
    int faults = 0;
    for (int i = 0; i < config.population; ++i) {
      fitness[i] = outcomes[i].eval.loss.fitness;
      if (outcomes[i].faulted) {
        ++faults;
      } else if (fitness[i] < best.fitness) {
        best = {fitness[i], configs[i], outcomes[i].eval};
      }
    }
    result.faults += faults;
    result.evaluations += config.population;
    if (faults > kMaxFaultFraction * config.population) {
      throw TransportError(std::to_string(faults) + " of " + std::to_string(config.population) +
                           " candidates faulted at iteration " + std::to_string(iteration));
    }
    try {
      es.tell(samples, fitness);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (iteration " + std::to_string(iteration) + ")");
    }

    const SearchState& st = es.state();
    result.trajectory.push_back({st.iteration, best.fitness, best.eval.loss, st.sigma, to_std(st.mean),
                                 to_std(st.cov.diagonal())});
    if (hooks.snapshot_every > 0 && hooks.on_snapshot && st.iteration % hooks.snapshot_every == 0) {
      hooks.on_snapshot(st.iteration, relight(image, best.config, ctx.render_params()));
    }
  }

  finish(result, ctx, best);
  const SearchState& st = es.state();
  result.lambda_mean =
      LightingConfig::from_flat(squash(std::span<const double>(st.mean.data(), st.mean.size()),
                                       ctx.transform()));
  result.wall_ms = elapsed_ms(start);
  return result;
}

AttackResult run_random_baseline(const ImageBuffer& image, const LabelSet& labels,
                                 const AttackConfig& config, int n_draws,
                                 const EmbeddingProvider& provider, const FeatureExtractor& features) {
  config.validate();
  if (n_draws < 1) throw std::invalid_argument("n_draws must be >= 1");
  const auto start = Clock::now();
  const AttackContext ctx(image, labels, config, provider, features);

  AttackResult result;
  result.clean = classify(ctx, image);
  result.evaluations = 1;

  std::mt19937_64 rng(config.seed);
  const BoxBounds& b = ctx.bounds();
  std::vector<LightingConfig> configs;
  configs.reserve(n_draws);
  std::vector<double> flat(b.size());
  for (int d = 0; d < n_draws; ++d) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      flat[k] = std::uniform_real_distribution<double>(b.lo[k], b.hi[k])(rng);
    }
    configs.push_back(LightingConfig::from_flat(flat));
  }

  const auto outcomes = evaluate_all(ctx, configs, config.workers);
  BestSoFar best;
  for (int d = 0; d < n_draws; ++d) {
    const auto& o = outcomes[d];
    ++result.evaluations;
    if (o.faulted) {
      ++result.faults;
    } else if (o.eval.loss.fitness < best.fitness) {
      best = {o.eval.loss.fitness, configs[d], o.eval};
    }
    result.trajectory.push_back({d + 1, best.fitness, best.eval.loss, 0.0, {}, {}});
  }
  if (result.faults == n_draws) {
    throw TransportError("every baseline draw faulted");
  }
  finish(result, ctx, best);
  result.stop_reason = StopReason::max_iters;
  result.wall_ms = elapsed_ms(start);
  return result;
}

}  // namespace lightattack

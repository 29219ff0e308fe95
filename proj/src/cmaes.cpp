#include "lightattack/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lightattack/errors.hpp"

namespace lightattack {

BoxBounds::BoxBounds(std::vector<double> lo_, std::vector<double> hi_)
    : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) {
    throw std::invalid_argument("bound vectors differ in length");
  }
  if (lo.empty()) {
    throw std::invalid_argument("bounds must have at least one dimension");
  }
  for (std::size_t k = 0; k < lo.size(); ++k) {
    if (!std::isfinite(lo[k]) || !std::isfinite(hi[k]) || !(lo[k] < hi[k])) {
      throw std::invalid_argument("bound " + std::to_string(k) + " needs finite lo < hi");
    }
  }
}

BoxBounds bounds_for_attack(int image_width, int image_height, int n_lights) {
  if (image_width <= 0 || image_height <= 0) {
    throw std::invalid_argument("image dimensions must be positive");
  }
  if (n_lights < 1) {
    throw std::invalid_argument("at least one light is required");
  }
  std::vector<double> lo, hi;
  for (int i = 0; i < n_lights; ++i) {
    lo.insert(lo.end(), {0.0, 0.0, kIntensityLo, kRadiusLo});
    hi.insert(hi.end(), {static_cast<double>(image_width), static_cast<double>(image_height),
                         kIntensityHi, kRadiusHi});
  }
  return BoxBounds(std::move(lo), std::move(hi));
}

BoxTransform BoxTransform::from_bounds(const BoxBounds& bounds) {
  BoxTransform t;
  t.scale.resize(bounds.size());
  t.offset.resize(bounds.size());
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    t.scale[k] = (bounds.hi[k] - bounds.lo[k]) / 2.0;
    t.offset[k] = (bounds.hi[k] + bounds.lo[k]) / 2.0;
  }
  t.lo = bounds.lo;
  t.hi = bounds.hi;
  return t;
}

std::vector<double> squash(std::span<const double> q, const BoxTransform& t) {
  if (q.size() != t.size()) {
    throw std::invalid_argument("squash: dimension mismatch");
  }
  std::vector<double> out(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double lo = t.lo.empty() ? t.offset[k] - t.scale[k] : t.lo[k];
    const double hi = t.hi.empty() ? t.offset[k] + t.scale[k] : t.hi[k];
    const double x = t.scale[k] * std::tanh(q[k]) + t.offset[k];
    // tanh saturates to +-1 in double precision; keep the open-box guarantee.
    out[k] = std::clamp(x, std::nextafter(lo, hi), std::nextafter(hi, lo));
  }
  return out;
}

double expected_normal_norm(std::size_t dim) {
  const double d = static_cast<double>(dim);
  return std::sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));
}

StrategyParams StrategyParams::make(std::size_t dim, int population, bool lra_enabled) {
  if (dim == 0) {
    throw std::invalid_argument("dimension must be positive");
  }
  if (population < 2) {
    throw std::invalid_argument("population must be at least 2");
  }
  StrategyParams p;
  p.population = population;
  p.parents = population / 2;
  p.weights.resize(p.parents);
  for (int i = 0; i < p.parents; ++i) {
    p.weights[i] = std::log(p.parents + 0.5) - std::log(i + 1.0);
  }
  const double sum = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
  double sq = 0.0;
  for (double& w : p.weights) {
    w /= sum;
    sq += w * w;
  }
  p.mu_eff = 1.0 / sq;
  const double d = static_cast<double>(dim);
  p.c_sigma = (p.mu_eff + 2.0) / (d + p.mu_eff + 5.0);
  p.c_c = (4.0 + p.mu_eff / d) / (d + 4.0 + 2.0 * p.mu_eff / d);
  p.chi_d = expected_normal_norm(dim);
  p.lra_enabled = lra_enabled;
  return p;
}

void StrategyParams::validate() const {
  if (population < 2) throw std::invalid_argument("population must be at least 2");
  if (parents < 1 || parents > population) {
    throw std::invalid_argument("parents must lie in [1, population]");
  }
  if (weights.size() != static_cast<std::size_t>(parents)) {
    throw std::invalid_argument("one weight per parent is required");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0)) throw std::invalid_argument("weights must be positive");
    if (i > 0 && weights[i] > weights[i - 1]) {
      throw std::invalid_argument("weights must be non-increasing");
    }
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("weights must sum to 1");
  if (!(c_c >= 0.0 && c_c <= 1.0)) throw std::invalid_argument("c_c must lie in [0, 1]");
  if (!(c_sigma > 0.0 && c_sigma <= 1.0)) {
    throw std::invalid_argument("c_sigma must lie in (0, 1]");
  }
  if (!(chi_d > 0.0)) throw std::invalid_argument("chi_d must be positive");
  if (!(lra_floor > 0.0) || !(lra_max_factor >= 1.0)) {
    throw std::invalid_argument("invalid LRA guard");
  }
}

void StopCriteria::validate() const {
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (!(min_delta >= 0.0)) throw std::invalid_argument("min_delta must be >= 0");
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::none: return "none";
    case StopReason::max_iters: return "max_iters";
    case StopReason::stagnation: return "stagnation";
    case StopReason::target: return "target";
  }
  return "none";
}

StopReason stop_reason_from_string(const std::string& text) {
  for (auto r : {StopReason::none, StopReason::max_iters, StopReason::stagnation, StopReason::target}) {
    if (to_string(r) == text) return r;
  }
  throw std::invalid_argument("unknown stop reason '" + text + "'");
}

SearchState SearchState::initial(std::size_t dim) {
  SearchState s;
  s.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  s.cov = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  s.sigma = 1.0;
  s.path = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  s.best_sample = s.mean;
  return s;
}

Eigen::MatrixXd repair_covariance(const Eigen::MatrixXd& cov) {
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  const double d = static_cast<double>(sym.rows());
  const double trace = sym.trace();
  if (!std::isfinite(trace) || !(trace > 0.0)) {
    throw NumericalError("covariance trace is not positive and finite");
  }
  const double floor = 1e-10 * trace / d;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("covariance eigendecomposition failed");
  }
  if (eig.eigenvalues().minCoeff() >= floor) {
    return sym;
  }
  const Eigen::VectorXd floored = eig.eigenvalues().cwiseMax(floor);
  Eigen::MatrixXd out = eig.eigenvectors() * floored.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

Population sample_population(const SearchState& state, const StrategyParams& params,
                             std::mt19937_64& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(state.cov);
  if (llt.info() != Eigen::Success) {
    llt.compute(repair_covariance(state.cov));
    if (llt.info() != Eigen::Success) {
      throw NumericalError("covariance is not positive definite after repair");
    }
  }
  const Eigen::MatrixXd chol = llt.matrixL();
  const auto d = static_cast<Eigen::Index>(state.dim());
  std::normal_distribution<double> normal(0.0, 1.0);
  Population out;
  out.reserve(params.population);
  Eigen::VectorXd xi(d);
  for (int i = 0; i < params.population; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) xi[k] = normal(rng);
    out.push_back(state.mean + state.sigma * (chol * xi));
  }
  return out;
}

std::vector<std::size_t> rank(std::span<const double> fitness) {
  std::vector<std::size_t> order(fitness.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool fa = std::isfinite(fitness[a]);
    const bool fb = std::isfinite(fitness[b]);
    if (fa != fb) return fa;
    if (!fa) return false;
    return fitness[a] < fitness[b];
  });
  if (order.empty() || !std::isfinite(fitness[order.front()])) {
    throw InvalidPopulation("no candidate in the population has a finite fitness");
  }
  return order;
}

Eigen::VectorXd update_mean(const Population& ranked, const StrategyParams& params) {
  if (ranked.size() < static_cast<std::size_t>(params.parents)) {
    throw std::invalid_argument("fewer ranked samples than parents");
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(ranked.front().size());
  for (int i = 0; i < params.parents; ++i) {
    mean += params.weights[i] * ranked[i];
  }
  return mean;
}

Eigen::MatrixXd update_covariance(const SearchState& state, const Population& ranked,
                                  const Eigen::VectorXd& old_mean, const StrategyParams& params) {
  if (ranked.size() < static_cast<std::size_t>(params.parents)) {
    throw std::invalid_argument("fewer ranked samples than parents");
  }
  Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(state.cov.rows(), state.cov.cols());
  for (int i = 0; i < params.parents; ++i) {
    const Eigen::VectorXd dev = (ranked[i] - old_mean) / state.sigma;
    rank_mu.noalias() += params.weights[i] * dev * dev.transpose();
  }
  return repair_covariance((1.0 - params.c_c) * state.cov + params.c_c * rank_mu);
}

Eigen::VectorXd update_path(const SearchState& state, const Eigen::VectorXd& new_mean,
                            const StrategyParams& params) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(state.cov);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("covariance eigendecomposition failed");
  }
  const Eigen::VectorXd inv_sqrt = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().cwiseInverse();
  if (!inv_sqrt.allFinite()) {
    throw NumericalError("covariance is singular");
  }
  const Eigen::MatrixXd& v = eig.eigenvectors();
  const Eigen::VectorXd step = (new_mean - state.mean) / state.sigma;
  const Eigen::VectorXd whitened = v * inv_sqrt.asDiagonal() * (v.transpose() * step);
  const double cs = params.c_sigma;
  return (1.0 - cs) * state.path + std::sqrt(cs * (2.0 - cs) * params.mu_eff) * whitened;
}

double update_step_size(double sigma, double path_norm, const StrategyParams& params) {
  return sigma * std::exp(params.c_sigma * (path_norm / params.chi_d - 1.0));
}

double lra_factor(double path_norm, const StrategyParams& params) {
  const double norm = std::max(path_norm, params.lra_floor);
  return std::min(params.lra_max_factor, std::exp(params.c_sigma / norm));
}

double lra_adapt(double sigma, double path_norm, const StrategyParams& params) {
  return sigma * lra_factor(path_norm, params);
}

void record_progress(SearchState& state, double generation_best, const Eigen::VectorXd& sample,
                     double min_delta) {
  const double previous = state.best_fitness;
  if (generation_best < state.best_fitness) {
    state.best_fitness = generation_best;
    state.best_sample = sample;
  }
  const double change = std::abs(state.best_fitness - previous);
  // inf - inf on the first generation compares false, which counts as progress.
  if (change < min_delta) {
    ++state.stagnation;
  } else {
    state.stagnation = 0;
  }
}

StopDecision should_stop(const SearchState& state, const StopCriteria& criteria) {
  if (state.iteration >= criteria.max_iters) return {true, StopReason::max_iters};
  if (state.stagnation >= criteria.patience) return {true, StopReason::stagnation};
  return {};
}

CmaEs::CmaEs(std::size_t dim, StrategyParams params, StopCriteria criteria, std::uint64_t seed)
    : state_(SearchState::initial(dim)),
      params_(std::move(params)),
      criteria_(criteria),
      rng_(seed) {
  params_.validate();
  criteria_.validate();
}

Population CmaEs::ask() { return sample_population(state_, params_, rng_); }

void CmaEs::tell(const Population& samples, std::span<const double> fitness) {
  if (samples.size() != fitness.size() || samples.size() != static_cast<std::size_t>(params_.population)) {
    throw std::invalid_argument("tell: expected one fitness per sample of a full population");
  }
  const auto order = rank(fitness);
  record_progress(state_, fitness[order.front()], samples[order.front()], criteria_.min_delta);

  Population ranked;
  ranked.reserve(params_.parents);
  for (int i = 0; i < params_.parents; ++i) ranked.push_back(samples[order[i]]);

  const Eigen::VectorXd old_mean = state_.mean;
  const Eigen::VectorXd new_mean = update_mean(ranked, params_);
  const Eigen::VectorXd new_path = update_path(state_, new_mean, params_);
  Eigen::MatrixXd new_cov = update_covariance(state_, ranked, old_mean, params_);

  const double path_norm = new_path.norm();
  double sigma = update_step_size(state_.sigma, path_norm, params_);
  if (params_.lra_enabled) sigma = lra_adapt(sigma, path_norm, params_);
  if (!std::isfinite(sigma) || !(sigma > 0.0)) {
    throw NumericalError("step size left (0, inf) at iteration " + std::to_string(state_.iteration));
  }

  state_.mean = new_mean;
  state_.path = new_path;
  state_.cov = std::move(new_cov);
  state_.sigma = sigma;
  ++state_.iteration;
}

MinimizeResult minimize(const BoxObjective& f, const BoxBounds& bounds, int population,
                        const StopCriteria& criteria, std::uint64_t seed,
                        std::optional<double> target, bool lra_enabled) {
  const BoxTransform transform = BoxTransform::from_bounds(bounds);
  CmaEs es(bounds.size(), StrategyParams::make(bounds.size(), population, lra_enabled), criteria, seed);
  MinimizeResult result;
  std::vector<double> fitness(population);
  while (true) {
    const StopDecision decision = es.should_stop();
    if (decision.stop) {
      result.reason = decision.reason;
      break;
    }
    const Population samples = es.ask();
    for (int i = 0; i < population; ++i) {
      const auto x = squash(std::span<const double>(samples[i].data(), samples[i].size()), transform);
      fitness[i] = f(x);
      ++result.evaluations;
      if (std::isfinite(fitness[i]) && fitness[i] < result.best_f) {
        result.best_f = fitness[i];
        result.best_x = x;
        if (target && !result.evaluations_to_target && result.best_f < *target) {
          result.evaluations_to_target = result.evaluations;
        }
      }
    }
    es.tell(samples, fitness);
    if (result.evaluations_to_target) {
      result.reason = StopReason::target;
      break;
    }
  }
  result.iterations = es.state().iteration;
  return result;
}

}  // namespace lightattack

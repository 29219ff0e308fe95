#pragma once

// Box-constrained CMA-ES.
//
// The search runs in an unconstrained space q ~ N(mean, sigma^2 C). Every sample
// is mapped into the feasible box by x = A * tanh(q) + B, so x always lies
// strictly inside (lo, hi). One generation is
//
//   sample K candidates -> rank ascending -> weighted mean of the best `parents`
//   -> evolution path -> rank-weighted covariance (deviations from the old mean)
//   -> cumulative step-size rule -> optional learning-rate factor exp(c_sigma/|p|).
//
// The covariance update uses deviations (q_i - mean_old) / sigma so C keeps the
// shape of the distribution and sigma its scale. It is followed by
// symmetrization and a relative eigenvalue floor so the Cholesky factor always exists.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lightattack {

struct BoxBounds {
  std::vector<double> lo;
  std::vector<double> hi;

  BoxBounds(std::vector<double> lo, std::vector<double> hi);
  std::size_t size() const { return lo.size(); }
};

/// Per light: x in [0, W], y in [0, H], intensity in [0.5, 1], radius in [10, 50].
BoxBounds bounds_for_attack(int image_width, int image_height, int n_lights);

inline constexpr double kIntensityLo = 0.5;
inline constexpr double kIntensityHi = 1.0;
inline constexpr double kRadiusLo = 10.0;
inline constexpr double kRadiusHi = 50.0;

struct BoxTransform {
  std::vector<double> scale;   // A = (hi - lo) / 2
  std::vector<double> offset;  // B = (hi + lo) / 2
  std::vector<double> lo;      // exact bounds; A and B alone round differently
  std::vector<double> hi;

  static BoxTransform from_bounds(const BoxBounds& bounds);
  std::size_t size() const { return scale.size(); }
};

/// x = A * tanh(q) + B, clamped to the open box at the floating-point level.
std::vector<double> squash(std::span<const double> q, const BoxTransform& t);

struct StrategyParams {
  int population = 20;
  int parents = 10;
  std::vector<double> weights;  // non-increasing, sums to 1
  double mu_eff = 1.0;
  double c_c = 0.0;
  double c_sigma = 0.0;
  double chi_d = 1.0;  // E|N(0, I_d)|
  bool lra_enabled = false;
  double lra_floor = 1e-3;
  double lra_max_factor = 10.0;

  /// Log-rank weights over floor(K/2) parents and dimension-based learning rates.
  static StrategyParams make(std::size_t dim, int population, bool lra_enabled = false);
  void validate() const;
};

/// sqrt(d) * (1 - 1/(4d) + 1/(21 d^2)).
double expected_normal_norm(std::size_t dim);

struct StopCriteria {
  int max_iters = 200;
  int patience = 50;
  double min_delta = 1e-6;

  void validate() const;
};

enum class StopReason { none, max_iters, stagnation, target };

std::string to_string(StopReason reason);
StopReason stop_reason_from_string(const std::string& text);

struct StopDecision {
  bool stop = false;
  StopReason reason = StopReason::none;
};

struct SearchState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double sigma = 1.0;
  Eigen::VectorXd path;
  int iteration = 0;
  double best_fitness = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_sample;
  int stagnation = 0;

  /// mean = 0, C = I, sigma = 1, p = 0.
  static SearchState initial(std::size_t dim);
  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

using Population = std::vector<Eigen::VectorXd>;

/// q_i = mean + sigma * chol(C) * xi_i, xi drawn sample by sample, coordinate by
/// coordinate. Throws NumericalError if C cannot be factorized even after repair.
Population sample_population(const SearchState& state, const StrategyParams& params,
                             std::mt19937_64& rng);

/// Stable ascending order; non-finite entries go last in index order.
/// Throws InvalidPopulation if nothing is finite.
std::vector<std::size_t> rank(std::span<const double> fitness);

/// sum_i w_i q_(i) over the ranked parents.
Eigen::VectorXd update_mean(const Population& ranked, const StrategyParams& params);

/// (1 - c_c) C + c_c sum_i w_i y_i y_i^T with y_i = (q_(i) - old_mean) / sigma, then repaired.
Eigen::MatrixXd update_covariance(const SearchState& state, const Population& ranked,
                                  const Eigen::VectorXd& old_mean, const StrategyParams& params);

/// Symmetrize, then floor eigenvalues at 1e-10 * trace(C) / d.
Eigen::MatrixXd repair_covariance(const Eigen::MatrixXd& cov);

/// p <- (1 - c_s) p + sqrt(c_s (2 - c_s) mu_eff) C^{-1/2} (new_mean - old_mean) / sigma,
/// using the covariance the step was sampled with.
Eigen::VectorXd update_path(const SearchState& state, const Eigen::VectorXd& new_mean,
                            const StrategyParams& params);

/// sigma * exp(c_s (|p| / chi_d - 1)).
double update_step_size(double sigma, double path_norm, const StrategyParams& params);

/// min(lra_max_factor, exp(c_s / max(|p|, lra_floor))).
double lra_factor(double path_norm, const StrategyParams& params);
double lra_adapt(double sigma, double path_norm, const StrategyParams& params);

/// Folds one generation's best fitness into the best-so-far and stagnation count.
void record_progress(SearchState& state, double generation_best, const Eigen::VectorXd& sample,
                     double min_delta);

StopDecision should_stop(const SearchState& state, const StopCriteria& criteria);

/// Ask/tell driver over the free functions above. Single-threaded; callers may
/// evaluate a population in parallel but must hand fitness back in sample order.
class CmaEs {
 public:
  CmaEs(std::size_t dim, StrategyParams params, StopCriteria criteria, std::uint64_t seed);

  Population ask();
  /// Throws InvalidPopulation when every fitness is non-finite.
  void tell(const Population& samples, std::span<const double> fitness);
  StopDecision should_stop() const { return lightattack::should_stop(state_, criteria_); }

  const SearchState& state() const { return state_; }
  const StrategyParams& params() const { return params_; }
  const StopCriteria& criteria() const { return criteria_; }

 private:
  SearchState state_;
  StrategyParams params_;
  StopCriteria criteria_;
  std::mt19937_64 rng_;
};

struct MinimizeResult {
  std::vector<double> best_x;
  double best_f = std::numeric_limits<double>::infinity();
  long evaluations = 0;
  /// Evaluation index (1-based) at which best_f first dropped below the target.
  std::optional<long> evaluations_to_target;
  int iterations = 0;
  StopReason reason = StopReason::none;
};

using BoxObjective = std::function<double(std::span<const double>)>;

/// Minimizes f over the box, evaluating the squashed samples in index order.
MinimizeResult minimize(const BoxObjective& f, const BoxBounds& bounds, int population,
                        const StopCriteria& criteria, std::uint64_t seed,
                        std::optional<double> target = std::nullopt, bool lra_enabled = false);

}  // namespace lightattack

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lightattack/attack.hpp"
#include "lightattack/cmaes.hpp"
#include "lightattack/lightfield.hpp"
#include "lightattack/objective.hpp"
#include "lightattack/persistence.hpp"
#include "lightattack/synthetic.hpp"

using namespace lightattack;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---- optimizer benchmarks --------------------------------------------------

double sphere(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double rosenbrock(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i];
    const double b = 1.0 - x[i];
    s += 100.0 * a * a + b * b;
  }
  return s;
}

Outcome benchmark(const BoxObjective& f, std::size_t dim, double target, long budget, int need) {
  const auto t0 = Clock::now();
  const BoxBounds box(std::vector<double>(dim, -5.0), std::vector<double>(dim, 5.0));
  int hits = 0;
  std::string misses;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    // Iteration cap equals the evaluation budget at K = 20.
    const StopCriteria stop{static_cast<int>(budget / 20), static_cast<int>(budget / 20), 0.0};
    MinimizeResult r;
    try {
      r = minimize(f, box, 20, stop, seed, target);
    } catch (const std::exception& e) {
      misses += fmt(" seed%llu:error", static_cast<unsigned long long>(seed));
      continue;
    }
    if (r.evaluations_to_target && *r.evaluations_to_target <= budget) {
      ++hits;
    } else {
      misses += fmt(" seed%llu:f=%.3g", static_cast<unsigned long long>(seed), r.best_f);
    }
  }
  const double secs = seconds_since(t0);
  return {hits >= need && secs < 60.0,
          fmt("%d/20 seeds reach f<%g within %ld evals (need %d), %.1fs (limit 60s);", hits, target, budget,
              need, secs) +
              (misses.empty() ? std::string(" no misses") : " misses:" + misses)};
}

// ---- loss oracles -----------------------------------------------------------

Outcome adversarial_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> len(2, 80);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> v(len(rng));
    for (auto& x : v) x = val(rng);
    const std::size_t truth = rng() % v.size();
    long double z = 0.0L;
    for (double x : v) z += std::exp(static_cast<long double>(x));
    const long double naive = -std::log(std::exp(static_cast<long double>(v[truth])) / z);
    worst = std::max(worst, static_cast<double>(std::fabs(adversarial_loss(v, truth) - naive)));
  }
  return {worst <= 1e-9, fmt("max |error| %.3g over 1000 vectors (tolerance 1e-9)", worst)};
}

Outcome distance_oracle() {
  std::mt19937_64 rng(102);
  std::uniform_int_distribution<int> count(1, 8);
  std::uniform_real_distribution<double> pos(0.0, 160.0), inten(0.5, 1.0), rad(10.0, 50.0);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<LightSource> s;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) s.emplace_back(pos(rng), pos(rng), inten(rng), rad(rng));
    const LightingConfig cfg(s);
    // Every unordered pair, visited as (a, b) with a < b in lexicographic order.
    double brute = 0.0;
    for (int k = 0; k < n * n; ++k) {
      const int a = k / n, b = k % n;
      if (a >= b) continue;
      const double dx = s[a].x() - s[b].x();
      const double dy = s[a].y() - s[b].y();
      brute += std::max(0.0, 50.0 - std::sqrt(dx * dx + dy * dy));
    }
    if (distance_loss(cfg, 50.0) != brute) ++mismatches;
  }
  return {mismatches == 0, fmt("%d of 1000 configurations differ from the brute-force sum", mismatches)};
}

// ---- render oracle ----------------------------------------------------------

Outcome render_oracle() {
  std::mt19937_64 rng(103);
  std::uniform_int_distribution<int> count(0, 6);
  std::uniform_real_distribution<double> pos(-8.0, 40.0), inten(0.0, 1.5), rad(0.5, 50.0), u01(0.0, 1.0),
      amb(0.0, 2.0);
  int map_mismatch = 0, out_of_range = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<LightSource> s;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) s.emplace_back(pos(rng), pos(rng), inten(rng), rad(rng));
    const LightingConfig cfg(s);
    const auto map = render_light_map(cfg, 32, 32);
    for (int v = 0; v < 32; ++v)
      for (int u = 0; u < 32; ++u)
        if (map.at(u, v) != illuminance_at(cfg, {u + 0.5, v + 0.5})) ++map_mismatch;
    std::vector<double> px(32 * 32 * 3);
    for (auto& x : px) x = u01(rng);
    const auto out = relight(ImageBuffer(32, 32, px), cfg, {amb(rng)});
    for (double x : out.values())
      if (!(x >= 0.0 && x <= 1.0)) ++out_of_range;
  }
  std::vector<double> px(32 * 32 * 3);
  for (auto& x : px) x = u01(rng);
  const ImageBuffer img(32, 32, px);
  const bool identity = relight(img, {}, {1.0}) == img;
  return {map_mismatch == 0 && out_of_range == 0 && identity,
          fmt("%d pixel mismatches over 200 configs at 32x32; identity %s; %d outputs outside [0,1]",
              map_mismatch, identity ? "holds" : "BROKEN", out_of_range)};
}

// ---- squash ---------------------------------------------------------------

Outcome squash_bounds() {
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> lo(-1e3, 1e3), width(1e-3, 1e3);
  std::cauchy_distribution<double> q(0.0, 5.0);
  long outside = 0;
  for (int t = 0; t < 100000; ++t) {
    const double l = lo(rng);
    const BoxBounds b({l}, {l + width(rng)});
    const double x = squash(std::vector<double>{q(rng)}, BoxTransform::from_bounds(b))[0];
    if (!(x > b.lo[0] && x < b.hi[0])) ++outside;
  }
  long non_monotone = 0;
  for (int g = 0; g < 100; ++g) {
    const double l = lo(rng);
    const auto t = BoxTransform::from_bounds(BoxBounds({l, -1.0}, {l + width(rng), 1.0}));
    // Non-decreasing everywhere; strictly increasing away from tanh saturation.
    double prev = -INFINITY;
    for (int i = 0; i <= 2000; ++i) {
      const double qv = -10.0 + 0.01 * i;
      const double x = squash(std::vector<double>{qv, 0.2}, t)[0];
      const bool strict = i > 0 && std::abs(qv) <= 3.0 && std::abs(qv - 0.01) <= 3.0;
      if (strict ? !(x > prev) : !(x >= prev)) ++non_monotone;
      prev = x;
    }
  }
  return {outside == 0 && non_monotone == 0,
          fmt("%ld of 100000 random pairs outside (lo, hi); %ld monotonicity violations on 100 sorted grids",
              outside, non_monotone)};
}

// ---- end-to-end -------------------------------------------------------------

struct SuiteRun {
  int flips = 0;
  int total = 0;
  double seconds = 0.0;
};

SuiteRun run_suite(const std::vector<SuiteItem>& suite, const AttackConfig& base) {
  const LocalProvider provider;
  const PyramidFeatureExtractor features;
  const auto& labels = coco30_labels();
  SuiteRun out;
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < suite.size(); ++i) {
    AttackConfig cfg = base;
    cfg.seed = i;
    const LabelSet ls(labels, suite[i].truth_index);
    const auto r = run_attack(suite[i].image, ls, cfg, provider, features);
    out.flips += r.success ? 1 : 0;
    ++out.total;
  }
  out.seconds = seconds_since(t0);
  return out;
}

// Regression floor: the calibrated rate (45/50) minus 5 points.
constexpr double kFlipRateFloor = 0.85;

Outcome end_to_end(const std::vector<SuiteItem>& suite) {
  const AttackConfig defaults;
  const auto r = run_suite(suite, defaults);
  const double rate = static_cast<double>(r.flips) / r.total;
  return {rate >= kFlipRateFloor && r.seconds < 600.0,
          fmt("flip rate %d/%d = %.0f%% (floor %.0f%%), %.1fs single worker (limit 600s)", r.flips, r.total,
              100 * rate, 100 * kFlipRateFloor, r.seconds)};
}

Outcome matched_budget(const std::vector<SuiteItem>& suite) {
  const LocalProvider provider;
  const PyramidFeatureExtractor features;
  const auto& labels = coco30_labels();
  int wins = 0;
  std::string losses;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto& item = suite[seed];
    AttackConfig cfg;
    cfg.seed = seed;
    const LabelSet ls(labels, item.truth_index);
    const auto opt = run_attack(item.image, ls, cfg, provider, features);
    const auto rnd =
        run_random_baseline(item.image, ls, cfg, cfg.population * cfg.max_iters, provider, features);
    if (opt.best_loss.fitness <= rnd.best_loss.fitness) {
      ++wins;
    } else {
      losses += fmt(" seed%llu(%.4f>%.4f)", static_cast<unsigned long long>(seed), opt.best_loss.fitness,
                    rnd.best_loss.fitness);
    }
  }
  return {wins >= 18, fmt("optimized <= random best on %d/20 paired seeds (need 18);", wins) +
                          (losses.empty() ? std::string(" no losses") : " losses:" + losses)};
}

std::string report_without_wall(const AttackResult& r, const AttackConfig& cfg) {
  auto report = make_report(r, cfg, "attack");
  report.wall_ms = 0.0;
  return serialize_report(report);
}

Outcome determinism(const std::vector<SuiteItem>& suite) {
  const LocalProvider provider;
  const PyramidFeatureExtractor features;
  const auto& labels = coco30_labels();
  int identical = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    AttackConfig cfg;
    cfg.seed = 1000 + i;
    cfg.workers = 1;
    const LabelSet ls(labels, suite[i].truth_index);
    const auto a = run_attack(suite[i].image, ls, cfg, provider, features);
    const auto b = run_attack(suite[i].image, ls, cfg, provider, features);
    if (report_without_wall(a, cfg) == report_without_wall(b, cfg)) ++identical;
  }
  return {identical == 3, fmt("%d/3 repeated runs give byte-identical reports (wall_ms excluded)", identical)};
}

// Every image embeds to the same vector, so with alpha = beta = 0 the fitness is constant.
class ConstantProvider final : public EmbeddingProvider {
 public:
  ProviderInfo info() const override { return {"constant", 4}; }
  Embedding embed_image(const ImageBuffer&) const override { return {1.0, 0.0, 0.0, 0.0}; }
  std::vector<Embedding> embed_texts(const std::vector<std::string>& labels) const override {
    std::vector<Embedding> out;
    for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({1.0, 0.1 * (i + 1), 0.0, 0.0});
    return out;
  }
};

Outcome early_stopping() {
  std::string detail;
  bool ok = true;
  for (int patience : {1, 5, 17}) {
    const BoxBounds box(std::vector<double>(4, -1.0), std::vector<double>(4, 1.0));
    const auto r = minimize([](std::span<const double>) { return 3.0; }, box, 10, {200, patience, 1e-9}, 7);
    // The first generation replaces the initial +inf best; every later one is stagnant.
    const int stagnant = r.iterations - 1;
    ok = ok && stagnant == patience && r.reason == StopReason::stagnation;
    detail += fmt("engine patience %d -> %d stagnant (%s); ", patience, stagnant, to_string(r.reason).c_str());
  }
  const ConstantProvider provider;
  const PyramidFeatureExtractor features;
  AttackConfig cfg;
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  cfg.patience = 12;
  const auto r = run_attack(two_tone_image(32, 32, 1), LabelSet({"a", "b", "c"}, 0), cfg, provider, features);
  const int stagnant = static_cast<int>(r.trajectory.size()) - 1;
  ok = ok && stagnant == cfg.patience && r.stop_reason == StopReason::stagnation;
  detail += fmt("attack patience %d -> %d stagnant (%s)", cfg.patience, stagnant, to_string(r.stop_reason).c_str());
  return {ok, detail};
}

Outcome ablation(const std::vector<SuiteItem>& suite) {
  std::string detail;
  for (int n = 1; n <= 4; ++n) {
    AttackConfig cfg;
    cfg.n_lights = n;
    const auto r = run_suite(suite, cfg);
    detail += fmt("n_lights=%d: %d/%d (%.0f%%, %.0fs)%s", n, r.flips, r.total, 100.0 * r.flips / r.total, r.seconds,
                  n < 4 ? "; " : "");
  }
  return {true, detail};
}

}  // namespace

int main() {
  const LocalProvider provider;
  const auto suite = synthetic_suite(provider, coco30_labels());

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"optimizer benchmark: sphere d=12", [] { return benchmark(sphere, 12, 1e-8, 3000, 19); }},
      {"optimizer benchmark: rosenbrock d=8", [] { return benchmark(rosenbrock, 8, 1e-4, 20000, 18); }},
      {"loss oracle: adversarial loss vs naive softmax", adversarial_oracle},
      {"loss oracle: distance loss vs brute force", distance_oracle},
      {"render oracle", render_oracle},
      {"squash stays inside the box", squash_bounds},
      {"end-to-end toy attack flip rate", [&] { return end_to_end(suite); }},
      {"matched-budget dominance over random search", [&] { return matched_budget(suite); }},
      {"determinism of reports", [&] { return determinism(suite); }},
      {"early stopping after exactly patience stagnant iterations", early_stopping},
      {"ablation sweep over n_lights 1..4", [&] { return ablation(suite); }},
  };

  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}

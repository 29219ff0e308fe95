// Serial reference vs OpenMP kernels for the per-pixel light field and relighting,
// plus one attack generation evaluated with 1 and N workers.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>

#include "lightattack/attack.hpp"
#include "lightattack/persistence.hpp"
#include "lightattack/synthetic.hpp"

using namespace lightattack;

namespace {

double time_ms(int reps, const std::function<void()>& fn) {
  fn();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx\n", name, serial, parallel,
              serial / parallel);
}

}  // namespace

int main() {
  const int threads = omp_get_max_threads();
  std::printf("OpenMP threads: %d\n", threads);

  const LightingConfig cfg = LightingConfig::from_flat(
      std::vector<double>{128, 128, 0.8, 40, 384, 200, 0.6, 25, 256, 400, 1.0, 50});
  const ImageBuffer img = two_tone_image(512, 512, 7);
  const RenderParams params;

  double sink = 0.0;
  report("render_light_map 512x512",
         time_ms(10, [&] { sink += reference::render_light_map(cfg, 512, 512).values[0]; }),
         time_ms(10, [&] { sink += render_light_map(cfg, 512, 512).values[0]; }));
  report("relight 512x512",
         time_ms(10, [&] { sink += reference::relight(img, cfg, params).values()[0]; }),
         time_ms(10, [&] { sink += relight(img, cfg, params).values()[0]; }));

  // One generation (K = 20) of candidate evaluations on a suite-sized image.
  const LocalProvider provider;
  const PyramidFeatureExtractor features;
  const ImageBuffer small = two_tone_image(kSuiteSide, kSuiteSide, 3);
  const LabelSet labels(coco30_labels(), 0);
  AttackConfig serial_cfg;
  serial_cfg.max_iters = 5;
  AttackConfig parallel_cfg = serial_cfg;
  parallel_cfg.workers = threads;
  report("run_attack 5 iters 64x64",
         time_ms(3, [&] { sink += run_attack(small, labels, serial_cfg, provider, features).best_loss.fitness; }),
         time_ms(3, [&] { sink += run_attack(small, labels, parallel_cfg, provider, features).best_loss.fitness; }));

  std::printf("(checksum %g)\n", sink);
  return 0;
}

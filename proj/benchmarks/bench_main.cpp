#include <benchmark/benchmark.h>

#include "mvdf/backbone.hpp"
#include "mvdf/codec.hpp"
#include "mvdf/evalharness.hpp"
#include "mvdf/rng.hpp"
#include "mvdf/schedule.hpp"
#include "mvdf/synth.hpp"
#include "mvdf/tokens.hpp"

namespace {

using namespace mvdf;

ModelConfig bench_model() {
  ModelConfig cfg;
  cfg.width = 64;
  cfg.depth = 2;
  cfg.heads = 4;
  cfg.patch_size = 8;
  cfg.image_h = 32;
  cfg.image_w = 32;
  cfg.appearance_dim = 8;
  cfg.max_frames = 65;
  return cfg;
}

Image noise_image(int side, uint64_t seed) {
  Rng rng(seed);
  Image img(side, side);
  for (float& v : img.data) v = 0.5f + 0.2f * rng.normalf();
  return img;
}

// One clean frame followed by noised frames, random content throughout.
RawSequence bench_sequence(const ModelConfig& cfg, int frame_count, uint64_t seed) {
  Rng rng(seed);
  RawSequence seq;
  seq.frame_count = frame_count;
  seq.tokens_per_frame = cfg.tokens_per_frame();
  seq.grid_h = cfg.image_h / cfg.patch_size;
  seq.grid_w = cfg.image_w / cfg.patch_size;
  seq.patch_dim = cfg.patch_dim();
  const int n = seq.token_count();
  seq.patches.resize(n, seq.patch_dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < seq.patch_dim; ++j) seq.patches(i, j) = rng.normalf();
  seq.descriptors.resize(frame_count, cfg.appearance_dim);
  for (int f = 0; f < frame_count; ++f)
    for (int j = 0; j < cfg.appearance_dim; ++j) seq.descriptors(f, j) = rng.normalf();
  seq.meta.resize(n);
  for (int f = 0; f < frame_count; ++f) {
    const bool noisy = f > 0;
    for (int s = 0; s < seq.tokens_per_frame; ++s) {
      auto& m = seq.meta[f * seq.tokens_per_frame + s];
      m.frame_index = f;
      m.spatial_index = s;
      m.clean = !noisy;
      m.timestep = noisy ? 500 : 0;
    }
  }
  seq.layout = SequenceLayout::interpolation;
  return seq;
}

void BM_Patchify(benchmark::State& state) {
  Image img = noise_image(32, 1);
  for (auto _ : state) benchmark::DoNotOptimize(default_codec().encode(img, 8));
}
BENCHMARK(BM_Patchify);

void BM_Unpatchify(benchmark::State& state) {
  FrameLatent lat = default_codec().encode(noise_image(32, 2), 8);
  for (auto _ : state) benchmark::DoNotOptimize(default_codec().decode(lat, 8));
}
BENCHMARK(BM_Unpatchify);

void BM_BuildSchedule(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(build_schedule(1000, ScheduleKind::cosine));
}
BENCHMARK(BM_BuildSchedule);

void BM_DdimStep(benchmark::State& state) {
  NoiseSchedule sched = build_schedule(1000, ScheduleKind::linear);
  Rng rng(3);
  Matf xt(16, 192), eps(16, 192);
  for (int i = 0; i < xt.rows(); ++i)
    for (int j = 0; j < xt.cols(); ++j) {
      xt(i, j) = rng.normalf();
      eps(i, j) = rng.normalf();
    }
  for (auto _ : state) benchmark::DoNotOptimize(ddim_step(xt, eps, 640, 620, sched));
}
BENCHMARK(BM_DdimStep);

void BM_RenderView(benchmark::State& state) {
  Scene scene = generate_scene(7, 512, 32);
  CameraPose pose;
  pose.cx = 256;
  pose.cy = 256;
  pose.rot = 0.2;
  pose.zoom = 1.1;
  Illumination illum;
  for (auto _ : state) benchmark::DoNotOptimize(render_view(scene, pose, illum, true, 0.4));
}
BENCHMARK(BM_RenderView);

void BM_Ssim(benchmark::State& state) {
  Image a = noise_image(32, 11), b = noise_image(32, 12);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim);

void BM_Forward(benchmark::State& state) {
  ModelConfig cfg = bench_model();
  Weights<float> w = init_weights<float>(cfg, 5);
  RawSequence seq = bench_sequence(cfg, int(state.range(0)), 6);
  for (auto _ : state) benchmark::DoNotOptimize(forward(w, seq));
  state.SetItemsProcessed(state.iterations() * seq.token_count());
}
BENCHMARK(BM_Forward)->Arg(17)->Arg(33)->Arg(65)->Unit(benchmark::kMillisecond);

void BM_LossAndGrads(benchmark::State& state) {
  ModelConfig cfg = bench_model();
  Weights<float> w = init_weights<float>(cfg, 8);
  RawSequence seq = bench_sequence(cfg, 17, 9);
  Rng rng(10);
  Matf target(seq.token_count(), seq.patch_dim);
  for (int i = 0; i < target.rows(); ++i)
    for (int j = 0; j < target.cols(); ++j) target(i, j) = rng.normalf();
  std::vector<uint8_t> mask(seq.token_count(), 0);
  for (int i = seq.tokens_per_frame; i < seq.token_count(); ++i) mask[i] = 1;
  Weights<float> grads = zero_weights<float>(cfg);
  for (auto _ : state) {
    grads.visit([](const std::string&, Matf& g) { g.setZero(); });
    benchmark::DoNotOptimize(loss_and_grads(w, seq, target, mask, grads));
  }
  state.SetItemsProcessed(state.iterations() * seq.token_count());
}
BENCHMARK(BM_LossAndGrads)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

#pragma once

#include <string>
#include <vector>

#include "mvdf/infer.hpp"
#include "mvdf/synth.hpp"

namespace mvdf {

// Peak signal-to-noise ratio in dB for [0, 1] images, capped at 99 dB so
// identical images stay finite.
double psnr(const Image& a, const Image& b);

// Mean SSIM over every fully interior 8x8 sliding window, averaged across
// channels. C1 = 0.01^2, C2 = 0.03^2 on a unit dynamic range.
double ssim(const Image& a, const Image& b);

// The no-learning reference: `count` linear blends of the endpoints with
// weights i / (count + 1), i = 1..count.
std::vector<Image> crossfade_baseline(const Image& a, const Image& b, int count);

// Largest consecutive-frame RMS change of the per-channel means. A strip
// whose global color is stable scores near zero.
double appearance_drift(const std::vector<Image>& frames);

struct EvalConfig {
  int sets_per_pair = 3;   // keyframe subsets per (scene, arity)
  int min_keyframes = 2;
  int max_keyframes = 5;
  int steps = 50;
  uint64_t seed = 0;
  bool use_appearance = true;
  bool use_masks = true;    // pass stored transient masks with the keyframes
  std::string strips_dir;   // when non-empty, writes truth/model/baseline strips
};

struct EvalRow {
  int scene = 0;
  int n = 0;
  int set_index = 0;
  double psnr_model = 0;
  double psnr_base = 0;
  double ssim_model = 0;
  double ssim_base = 0;
  double drift_model = 0;
  double drift_base = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_psnr_model = 0;
  double mean_psnr_base = 0;
  double mean_ssim_model = 0;
  double mean_ssim_base = 0;
  double mean_drift_model = 0;
  double mean_drift_base = 0;
  uint64_t weights_hash = 0;
};

// Protocol, per scene and keyframe arity: draw a photo subset, order it by
// the shortest pose-space path (brute force over permutations), generate the
// gaps, and score against ground truth re-rendered along the interpolated
// poses under the first keyframe's illumination with transients excluded.
EvalReport run_eval(Weights<float>& w, const std::string& dataset_dir, const EvalConfig& cfg);

void write_report_json(const EvalReport& rep, const EvalConfig& cfg, const std::string& path);

}  // namespace mvdf

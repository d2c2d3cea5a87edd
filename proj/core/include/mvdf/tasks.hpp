#pragma once

#include <string>
#include <vector>

#include "mvdf/backbone.hpp"
#include "mvdf/codec.hpp"
#include "mvdf/image.hpp"
#include "mvdf/schedule.hpp"
#include "mvdf/tokens.hpp"

namespace mvdf {

// Brightness, contrast, saturation, and hue adjustments drawn up front and
// applied in a shuffled order; output clamped to [0, 1]. strength 0 is an
// exact identity while still consuming the same number of draws, so streams
// stay aligned across strengths.
Image color_jitter(const Image& img, Rng& rng, double strength);

// Axis-aligned token rectangle hiding approximately `region` of a frame; the
// side lengths are the feasible factor pair whose area is closest to
// round(region * tokens). Returns per-token flags in spatial-index order.
std::vector<uint8_t> random_condition_mask(int grid_h, int grid_w, double region, Rng& rng);

struct TaskParams {
  double task_mix = 0.5;        // probability a step draws the photo inpainting task
  double mask_ratio = 0.8;      // fraction of the inpainting target that gets noised
  double jitter_strength = 0.8;
  double cond_mask_prob = 0.3;  // chance a condition frame hides a rectangle
  double cond_mask_region = 0.25;
  int baseline_multiplier = 1;  // max temporal stride between video keyframes
};

// One scene's raw training material, decoded from the dataset tree.
struct SceneData {
  std::vector<Image> photos;
  std::vector<Mask> photo_masks;
  std::vector<Image> clip;
};

std::vector<SceneData> load_training_scenes(const std::string& dataset_dir);

struct TrainingSample {
  RawSequence seq;
  Matf target_eps;                 // per-token noise to predict; zero outside the loss mask
  std::vector<uint8_t> loss_mask;  // per token
  int timestep = 0;
  SequenceLayout task = SequenceLayout::other;
};

// Unordered photo task: 1-4 clean condition photos plus one target photo whose
// tokens are noised at a shared timestep for all but a clean remainder.
// Transient-covered tokens are hidden behind the mask token where clean and
// dropped from the loss where noised.
TrainingSample build_inpainting_sample(const SceneData& scene, const ModelConfig& cfg,
                                       const NoiseSchedule& sched, Rng& rng,
                                       const TaskParams& tp);

// Video task: keyframes every 16 sequence positions (source stride scaled by a
// sampled baseline multiplier), 15 fully noised intermediates per gap.
// Keyframes are color jittered with descriptors computed after the jitter;
// intermediate descriptors come from the clean frames.
TrainingSample build_interpolation_sample(const SceneData& scene, const ModelConfig& cfg,
                                          const NoiseSchedule& sched, Rng& rng,
                                          const TaskParams& tp);

// Flips the task_mix coin, falling back to the task the scene can support.
TrainingSample build_training_sample(const SceneData& scene, const ModelConfig& cfg,
                                     const NoiseSchedule& sched, Rng& rng, const TaskParams& tp);

// Forward pass plus masked noise-prediction error, no gradients.
float sample_loss(const Weights<float>& w, const TrainingSample& s);

struct TrainConfig {
  int steps = 2000;
  int batch = 1;    // samples averaged into each optimizer update
  int threads = 1;  // worker threads sharing the batch; results depend only on config
  double lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  uint64_t seed = 0;
  ScheduleKind schedule = ScheduleKind::linear;
  int diffusion_steps = 1000;
  TaskParams task;
};

struct AdamState {
  std::vector<Matf> m;
  std::vector<Matf> v;
  int64_t t = 0;
};

AdamState make_adam_state(Weights<float>& w);

// Decoupled weight decay applied only to matmul weights (final name component
// starting with 'w'); gains, biases, embeddings, and the position table are
// exempt.
void adamw_update(Weights<float>& w, Weights<float>& grads, AdamState& st,
                  const TrainConfig& cfg);

// Owns the weights, optimizer state, and schedule. Each step derives its RNG
// stream from (seed, step), so training is reproducible and resumable.
class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& cfg);

  void attach_data(std::vector<SceneData> data);

  // One optimizer step: sample, loss, clip, update. Throws if the loss is not
  // finite. Returns the pre-update loss.
  float train_step();

  ModelConfig model;
  TrainConfig cfg;
  NoiseSchedule sched;
  Weights<float> weights;
  AdamState opt;
  std::vector<SceneData> scenes;
  int64_t step = 0;
  std::vector<float> loss_log;
};

}  // namespace mvdf

#pragma once

#include <string>
#include <vector>

#include "mvdf/backbone.hpp"
#include "mvdf/codec.hpp"
#include "mvdf/image.hpp"
#include "mvdf/schedule.hpp"
#include "mvdf/tokens.hpp"

namespace mvdf {

// Deterministic sampling request. Keyframes pin sequence positions 0, 16,
// 32, ...; the sampler fills the 15 positions inside each gap. masks, when
// present, run parallel to keyframes and hide the marked pixels' tokens
// behind the mask embedding. descriptors, when present, override the
// appearance hint computed from each keyframe. All generated frames share
// one appearance hint, taken from appearance_source when set and from the
// first keyframe otherwise.
struct GenerationRequest {
  std::vector<Image> keyframes;
  std::vector<Mask> masks;
  std::vector<Matf> descriptors;  // each 1 x appearance_dim
  Image appearance_source;        // empty: fall back to keyframe 0
  bool use_appearance = true;
  int steps = 50;
  uint64_t seed = 0;
  ScheduleKind schedule = ScheduleKind::linear;
  int diffusion_steps = 1000;
};

struct GenerationResult {
  std::vector<Image> frames;  // generated intermediates only, 15 * (n - 1)
  uint64_t request_hash = 0;
  uint64_t weights_hash = 0;
};

// Stable digest of the float tensor contents in canonical traversal order.
uint64_t weights_digest(Weights<float>& w);
uint64_t request_digest(const GenerationRequest& req);

// Single window, 2 to 5 keyframes. Intermediates start as seeded iid noise
// and anneal through the timestep subsequence; keyframe tokens stay pinned.
GenerationResult generate(Weights<float>& w, const GenerationRequest& req);

// Any keyframe count >= 2: consecutive windows of up to 5 keyframes (fewer
// when max_frames is tight), each window sharing its first keyframe with the
// previous window's last, so seven keyframes still yield 15 * 6 = 90 frames.
GenerationResult generate_chained(Weights<float>& w, const GenerationRequest& req);

// Keyframes and generated frames interleaved in sequence order:
// key 0, 15 generated, key 1, 15 generated, ..., key n-1.
std::vector<Image> full_strip(const std::vector<Image>& keyframes,
                              const std::vector<Image>& generated);

// Mean per-frame RMS pixel difference after swapping keyframes 1 and 2.
// Needs at least 3 keyframes.
double reorder_sensitivity(Weights<float>& w, const GenerationRequest& req);

}  // namespace mvdf

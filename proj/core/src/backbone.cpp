#include "mvdf/backbone.hpp"

namespace mvdf {

void validate(const ModelConfig& cfg) {
  MVDF_CHECK(cfg.width >= 2 && cfg.width % 2 == 0, "config: width must be even and >= 2");
  MVDF_CHECK(cfg.depth >= 1, "config: depth must be >= 1");
  MVDF_CHECK(cfg.heads >= 1 && cfg.width % cfg.heads == 0,
             "config: width " << cfg.width << " must be divisible by heads " << cfg.heads);
  MVDF_CHECK(cfg.patch_size >= 1, "config: patch size must be >= 1");
  MVDF_CHECK(cfg.image_h % cfg.patch_size == 0 && cfg.image_w % cfg.patch_size == 0,
             "config: patch size " << cfg.patch_size << " must divide image " << cfg.image_h
                                   << "x" << cfg.image_w);
  MVDF_CHECK(cfg.appearance_dim >= 1, "config: appearance dim must be >= 1");
  MVDF_CHECK(cfg.max_frames >= 1, "config: max frames must be >= 1");
}

int64_t param_count(const ModelConfig& cfg) {
  Weights<float> w = zero_weights<float>(cfg);
  return w.param_count();
}

}  // namespace mvdf

#pragma once

#include <memory>

#include "mvdf/common.hpp"
#include "mvdf/image.hpp"

namespace mvdf {

// Per-frame latent grid: one row per token, tokens in row-major grid order,
// each row a flattened p x p patch (pixel order row-major, channels innermost).
struct FrameLatent {
  int grid_h = 0;
  int grid_w = 0;
  int patch_dim = 0;
  Matf features;  // (grid_h * grid_w) x patch_dim

  int token_count() const { return grid_h * grid_w; }
};

// Pure spatial rearrangement; exactly invertible.
FrameLatent patchify(const Image& img, int patch_size);
Image unpatchify(const FrameLatent& lat, int patch_size);

// Maps images to the space the denoiser diffuses in and back. The default
// codec is patchification with pixel values rescaled to [-1, 1]; decode clamps
// back into [0, 1]. Alternative latent codecs plug in behind this interface.
class PixelCodec {
 public:
  virtual ~PixelCodec() = default;
  virtual FrameLatent encode(const Image& img, int patch_size) const = 0;
  virtual Image decode(const FrameLatent& lat, int patch_size) const = 0;
  virtual int patch_dim(int patch_size) const = 0;
};

class IdentityCodec final : public PixelCodec {
 public:
  FrameLatent encode(const Image& img, int patch_size) const override;
  Image decode(const FrameLatent& lat, int patch_size) const override;
  int patch_dim(int patch_size) const override { return patch_size * patch_size * 3; }
};

const PixelCodec& default_codec();

}  // namespace mvdf

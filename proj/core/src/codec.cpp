#include "mvdf/codec.hpp"

namespace mvdf {

FrameLatent patchify(const Image& img, int p) {
  MVDF_CHECK(p >= 1, "patchify: patch size must be >= 1");
  MVDF_CHECK(img.height % p == 0 && img.width % p == 0,
             "patchify: patch size " << p << " must divide " << img.height << "x" << img.width);
  FrameLatent lat;
  lat.grid_h = img.height / p;
  lat.grid_w = img.width / p;
  lat.patch_dim = p * p * 3;
  lat.features.resize(lat.token_count(), lat.patch_dim);
  for (int gy = 0; gy < lat.grid_h; ++gy) {
    for (int gx = 0; gx < lat.grid_w; ++gx) {
      float* row = lat.features.row(gy * lat.grid_w + gx).data();
      int k = 0;
      for (int py = 0; py < p; ++py)
        for (int px = 0; px < p; ++px)
          for (int c = 0; c < 3; ++c) row[k++] = img.at(gy * p + py, gx * p + px, c);
    }
  }
  return lat;
}

Image unpatchify(const FrameLatent& lat, int p) {
  MVDF_CHECK(lat.patch_dim == p * p * 3,
             "unpatchify: patch_dim " << lat.patch_dim << " does not match patch size " << p);
  MVDF_CHECK(lat.features.rows() == lat.token_count(), "unpatchify: token count mismatch");
  Image img(lat.grid_h * p, lat.grid_w * p);
  for (int gy = 0; gy < lat.grid_h; ++gy) {
    for (int gx = 0; gx < lat.grid_w; ++gx) {
      const float* row = lat.features.row(gy * lat.grid_w + gx).data();
      int k = 0;
      for (int py = 0; py < p; ++py)
        for (int px = 0; px < p; ++px)
          for (int c = 0; c < 3; ++c) img.at(gy * p + py, gx * p + px, c) = row[k++];
    }
  }
  return img;
}

FrameLatent IdentityCodec::encode(const Image& img, int p) const {
  FrameLatent lat = patchify(img, p);
  lat.features = 2.0f * lat.features.array() - 1.0f;
  return lat;
}

Image IdentityCodec::decode(const FrameLatent& lat, int p) const {
  FrameLatent un = lat;
  un.features = 0.5f * (lat.features.array() + 1.0f);
  Image img = unpatchify(un, p);
  for (float& v : img.data) v = clamp01(v);
  return img;
}

const PixelCodec& default_codec() {
  static IdentityCodec codec;
  return codec;
}

}  // namespace mvdf

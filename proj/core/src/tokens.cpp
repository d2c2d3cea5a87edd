#include "mvdf/tokens.hpp"

#include <mutex>
#include <numeric>

namespace mvdf {

SequenceLayout detect_layout(const std::vector<TokenMeta>& meta, int frame_count,
                             int tokens_per_frame) {
  MVDF_CHECK(static_cast<int>(meta.size()) == frame_count * tokens_per_frame,
             "detect_layout: metadata size mismatch");
  std::vector<bool> has_clean(frame_count, false), has_noisy(frame_count, false);
  for (const auto& m : meta) (m.clean ? has_clean : has_noisy)[m.frame_index] = true;

  int mixed = 0, pure_noisy = 0, pure_clean = 0;
  for (int f = 0; f < frame_count; ++f) {
    if (has_clean[f] && has_noisy[f])
      ++mixed;
    else if (has_noisy[f])
      ++pure_noisy;
    else
      ++pure_clean;
  }
  if (mixed == 1 && pure_noisy == 0) return SequenceLayout::inpainting;
  if (mixed == 0 && pure_noisy >= 1 && pure_clean >= 1) return SequenceLayout::interpolation;
  return SequenceLayout::other;
}

std::vector<uint8_t> select_inpaint_mask(int token_count, double ratio, Rng& rng) {
  MVDF_CHECK(token_count >= 1, "select_inpaint_mask: empty grid");
  MVDF_CHECK(ratio >= 0.0 && ratio <= 1.0, "select_inpaint_mask: ratio outside [0, 1]");
  int want = static_cast<int>(std::llround(ratio * token_count));
  std::vector<int> idx(token_count);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<uint8_t> mask(token_count, 0);
  // Partial Fisher-Yates: the first `want` slots end up a uniform subset.
  for (int i = 0; i < want; ++i) {
    int j = static_cast<int>(rng.uniform_int(i, token_count - 1));
    std::swap(idx[i], idx[j]);
    mask[idx[i]] = 1;
  }
  return mask;
}

std::vector<uint8_t> transient_token_flags(const Mask& mask, int p) {
  MVDF_CHECK(mask.height % p == 0 && mask.width % p == 0,
             "transient_token_flags: patch size must divide mask dimensions");
  int gh = mask.height / p, gw = mask.width / p;
  std::vector<uint8_t> flags(size_t(gh) * gw, 0);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      bool hit = false;
      for (int py = 0; py < p && !hit; ++py)
        for (int px = 0; px < p && !hit; ++px)
          if (mask.at(gy * p + py, gx * p + px)) hit = true;
      flags[size_t(gy) * gw + gx] = hit ? 1 : 0;
    }
  return flags;
}

std::array<double, kAppearanceStats> appearance_raw_stats(const Image& img) {
  std::array<double, kAppearanceStats> stats{};
  size_t n = img.pixel_count();
  MVDF_CHECK(n > 0, "appearance_raw_stats: empty image");
  double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
  double hist[3][8] = {};
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      double v = img.data[i * 3 + c];
      sum[c] += v;
      sq[c] += v * v;
      int bin = std::min(7, static_cast<int>(v * 8.0));
      hist[c][std::max(0, bin)] += 1.0;
    }
  }
  for (int c = 0; c < 3; ++c) {
    double mean = sum[c] / double(n);
    double var = std::max(0.0, sq[c] / double(n) - mean * mean);
    stats[c] = mean;
    stats[3 + c] = std::sqrt(var);
    for (int b = 0; b < 8; ++b) stats[6 + c * 8 + b] = hist[c][b] / double(n);
  }
  return stats;
}

const Matf& appearance_projection(int d_a) {
  static std::mutex mu;
  static std::map<int, Matf> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(d_a);
  if (it == cache.end()) {
    Rng rng = Rng::derive(0x6d7664665f617070ull, static_cast<uint64_t>(d_a));
    Matf w(d_a, kAppearanceStats);
    float scale = 1.0f / std::sqrt(float(kAppearanceStats));
    for (int i = 0; i < d_a; ++i)
      for (int j = 0; j < kAppearanceStats; ++j) w(i, j) = rng.normalf() * scale;
    it = cache.emplace(d_a, std::move(w)).first;
  }
  return it->second;
}

Matf appearance_descriptor(const Image& img, int d_a) {
  auto stats = appearance_raw_stats(img);
  Vecf raw(kAppearanceStats);
  for (int i = 0; i < kAppearanceStats; ++i) raw[i] = static_cast<float>(stats[i]);
  return (appearance_projection(d_a) * raw).transpose();
}

}  // namespace mvdf

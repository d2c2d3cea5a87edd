#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mvdf/codec.hpp"
#include "mvdf/common.hpp"
#include "mvdf/image.hpp"
#include "mvdf/rng.hpp"

namespace mvdf {

// Per-token bookkeeping. clean tokens condition the denoiser and carry
// timestep 0; noisy tokens carry the sampled timestep. transient marks sprite
// coverage; masked marks tokens whose content is replaced by the learned mask
// token (condition dropout and transient conditions).
struct TokenMeta {
  int frame_index = 0;
  int spatial_index = 0;
  bool clean = true;
  int timestep = 0;
  bool transient = false;
  bool masked = false;
};

enum class SequenceLayout { inpainting, interpolation, other };

// Pre-embedding token sequence: latent patch content plus metadata plus one
// appearance descriptor per frame. Frame-major, row-major within each frame.
struct RawSequence {
  int frame_count = 0;
  int tokens_per_frame = 0;
  int grid_h = 0;
  int grid_w = 0;
  int patch_dim = 0;
  Matf patches;  // N x patch_dim, N = frame_count * tokens_per_frame
  std::vector<TokenMeta> meta;
  Matf descriptors;  // frame_count x D_a
  SequenceLayout layout = SequenceLayout::other;
  bool appearance_enabled = true;

  int token_count() const { return frame_count * tokens_per_frame; }
};

// The two training layouts are recoverable from metadata alone: inpainting has
// exactly one partially noised frame; interpolation has every frame either
// fully clean or fully noised, with at least one of each.
SequenceLayout detect_layout(const std::vector<TokenMeta>& meta, int frame_count,
                             int tokens_per_frame);

// Exactly round(ratio * tokens) entries set, chosen uniformly at random.
std::vector<uint8_t> select_inpaint_mask(int token_count, double ratio, Rng& rng);

// Token-level transient flags: a token is transient if any pixel of its patch
// footprint is marked in the mask.
std::vector<uint8_t> transient_token_flags(const Mask& mask, int patch_size);

// Color statistics summary: per-channel mean, per-channel std, per-channel
// 8-bin histogram, in that order.
inline constexpr int kAppearanceStats = 30;
std::array<double, kAppearanceStats> appearance_raw_stats(const Image& img);

// Fixed seeded projection from the 30 raw statistics to width d_a. The same
// matrix is used by every model, so descriptors are comparable across runs.
const Matf& appearance_projection(int d_a);
// Returned as a 1 x d_a row, ready to drop into a descriptor table row.
Matf appearance_descriptor(const Image& img, int d_a);

// Sin/cos features of an integer timestep, width c (even), geometric
// frequency ladder over 4 decades.
template <typename S>
Vec<S> time_features(int t, int c) {
  MVDF_CHECK(c % 2 == 0, "time_features: width must be even");
  Vec<S> out(c);
  int half = c / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
    double a = double(t) * freq;
    out[2 * i] = static_cast<S>(std::sin(a));
    out[2 * i + 1] = static_cast<S>(std::cos(a));
  }
  return out;
}

// Learned maps that turn raw token content and metadata into width-C features.
// The assembled feature is the exact sum of five terms: projected patch
// content (or projected mask token), frame-index embedding, projected
// appearance descriptor, timestep embedding, clean/noisy flag embedding.
template <typename S>
struct EmbeddingParams {
  Mat<S> patch_w;   // C x patch_dim
  Mat<S> patch_b;   // 1 x C
  Mat<S> frame;     // max_frames x C, learned per-frame-index table
  Mat<S> appear_w;  // C x D_a
  Mat<S> appear_b;  // 1 x C
  Mat<S> time_w;    // C x C
  Mat<S> time_b;    // 1 x C
  Mat<S> flag;      // 2 x C, row 0 clean, row 1 noisy
  Mat<S> mask_token;  // 1 x patch_dim

  template <typename Fn>
  void visit(Fn&& fn) {
    fn("embed.patch.w", patch_w);
    fn("embed.patch.b", patch_b);
    fn("embed.frame", frame);
    fn("embed.appear.w", appear_w);
    fn("embed.appear.b", appear_b);
    fn("embed.time.w", time_w);
    fn("embed.time.b", time_b);
    fn("embed.flag", flag);
    fn("embed.mask_token", mask_token);
  }
};

namespace detail {

// Patch content actually fed to the projection: masked tokens use the learned
// mask token in place of their stored content.
template <typename S>
Mat<S> effective_patches(const RawSequence& seq, const EmbeddingParams<S>& E) {
  Mat<S> P = seq.patches.template cast<S>();
  for (int i = 0; i < seq.token_count(); ++i)
    if (seq.meta[i].masked) P.row(i) = E.mask_token.row(0);
  return P;
}

template <typename S>
Mat<S> timestep_rows(const RawSequence& seq, int c) {
  std::map<int, Vec<S>> cache;
  Mat<S> out(seq.token_count(), c);
  for (int i = 0; i < seq.token_count(); ++i) {
    int t = seq.meta[i].timestep;
    auto it = cache.find(t);
    if (it == cache.end()) it = cache.emplace(t, time_features<S>(t, c)).first;
    out.row(i) = it->second.transpose();
  }
  return out;
}

}  // namespace detail

enum class AssembleTerm { patch = 0, frame = 1, appearance = 2, timestep = 3, flag = 4 };

// One N x C matrix per summand; the assembled sequence is their exact sum.
template <typename S>
std::array<Mat<S>, 5> assemble_terms(const RawSequence& seq, const EmbeddingParams<S>& E) {
  const int n = seq.token_count();
  const int c = static_cast<int>(E.patch_w.rows());
  MVDF_CHECK(seq.patches.rows() == n && static_cast<int>(seq.meta.size()) == n,
             "assemble: token count mismatch");
  MVDF_CHECK(seq.patches.cols() == E.patch_w.cols(), "assemble: patch width mismatch");

  std::array<Mat<S>, 5> terms;
  Mat<S> P = detail::effective_patches(seq, E);
  terms[0] = P * E.patch_w.transpose();
  terms[0].rowwise() += E.patch_b.row(0);

  MVDF_CHECK(seq.frame_count <= int(E.frame.rows()),
             "assemble: frame count exceeds the frame embedding table");
  terms[1].resize(n, c);
  for (int i = 0; i < n; ++i) terms[1].row(i) = E.frame.row(seq.meta[i].frame_index);

  terms[2].setZero(n, c);
  if (seq.appearance_enabled) {
    MVDF_CHECK(seq.descriptors.rows() == seq.frame_count, "assemble: descriptor count mismatch");
    Mat<S> D = seq.descriptors.template cast<S>();
    Mat<S> per_frame = D * E.appear_w.transpose();
    per_frame.rowwise() += E.appear_b.row(0);
    for (int i = 0; i < n; ++i) terms[2].row(i) = per_frame.row(seq.meta[i].frame_index);
  }

  Mat<S> T = detail::timestep_rows<S>(seq, c);
  terms[3] = T * E.time_w.transpose();
  terms[3].rowwise() += E.time_b.row(0);

  terms[4].resize(n, c);
  for (int i = 0; i < n; ++i) terms[4].row(i) = E.flag.row(seq.meta[i].clean ? 0 : 1);
  return terms;
}

template <typename S>
Mat<S> assemble_sequence(const RawSequence& seq, const EmbeddingParams<S>& E) {
  auto terms = assemble_terms(seq, E);
  Mat<S> x = std::move(terms[0]);
  for (int k = 1; k < 5; ++k) x += terms[k];
  return x;
}

// Accumulates parameter gradients of the assembled features. Token content is
// data, so no gradient flows to it, except through the learned mask token.
template <typename S>
void assemble_backward(const RawSequence& seq, const EmbeddingParams<S>& E, const Mat<S>& dx,
                       EmbeddingParams<S>& g) {
  const int n = seq.token_count();
  const int c = static_cast<int>(E.patch_w.rows());
  Mat<S> P = detail::effective_patches(seq, E);
  g.patch_w += dx.transpose() * P;
  g.patch_b.row(0) += dx.colwise().sum();
  for (int i = 0; i < n; ++i)
    if (seq.meta[i].masked) g.mask_token.row(0) += dx.row(i) * E.patch_w;

  for (int i = 0; i < n; ++i) g.frame.row(seq.meta[i].frame_index) += dx.row(i);

  if (seq.appearance_enabled) {
    Mat<S> per_frame = Mat<S>::Zero(seq.frame_count, c);
    for (int i = 0; i < n; ++i) per_frame.row(seq.meta[i].frame_index) += dx.row(i);
    Mat<S> D = seq.descriptors.template cast<S>();
    g.appear_w += per_frame.transpose() * D;
    g.appear_b.row(0) += per_frame.colwise().sum();
  }

  Mat<S> T = detail::timestep_rows<S>(seq, c);
  g.time_w += dx.transpose() * T;
  g.time_b.row(0) += dx.colwise().sum();

  for (int i = 0; i < n; ++i) g.flag.row(seq.meta[i].clean ? 0 : 1) += dx.row(i);
}

}  // namespace mvdf

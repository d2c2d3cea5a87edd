#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mvdf/common.hpp"
#include "mvdf/rng.hpp"
#include "mvdf/tokens.hpp"

namespace mvdf {

// Denoiser shape. width is the trunk feature size, patch_size the pixel patch
// edge, max_frames the longest frame arity the position bookkeeping supports.
struct ModelConfig {
  int width = 256;
  int depth = 8;
  int heads = 8;
  int patch_size = 4;
  int image_h = 32;
  int image_w = 32;
  int appearance_dim = 16;
  int max_frames = 65;

  int tokens_per_frame() const { return (image_h / patch_size) * (image_w / patch_size); }
  int patch_dim() const { return patch_size * patch_size * 3; }
};

void validate(const ModelConfig& cfg);

template <typename S>
struct BlockParams {
  Mat<S> ln1_g, ln1_b;
  Mat<S> wqkv, bqkv;  // (3C x C), (1 x 3C)
  Mat<S> wo, bo;      // (C x C), (1 x C)
  Mat<S> ln2_g, ln2_b;
  Mat<S> w1, b1;  // (4C x C), (1 x 4C)
  Mat<S> w2, b2;  // (C x 4C), (1 x C)

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".ln1.g", ln1_g);
    fn(prefix + ".ln1.b", ln1_b);
    fn(prefix + ".attn.wqkv", wqkv);
    fn(prefix + ".attn.bqkv", bqkv);
    fn(prefix + ".attn.wo", wo);
    fn(prefix + ".attn.bo", bo);
    fn(prefix + ".ln2.g", ln2_g);
    fn(prefix + ".ln2.b", ln2_b);
    fn(prefix + ".mlp.w1", w1);
    fn(prefix + ".mlp.b1", b1);
    fn(prefix + ".mlp.w2", w2);
    fn(prefix + ".mlp.b2", b2);
  }
};

// Full parameter set: conditioning embeddings, a learned within-frame position
// table, pre-norm transformer blocks, and a per-token output head predicting
// noise in patch space.
template <typename S>
struct Weights {
  ModelConfig cfg;
  EmbeddingParams<S> embed;
  Mat<S> pos;  // tokens_per_frame x C
  std::vector<BlockParams<S>> blocks;
  Mat<S> head_ln_g, head_ln_b;
  Mat<S> head_w, head_b;  // (patch_dim x C), (1 x patch_dim)
  // Linear skip from raw token content to the prediction. The trunk output is
  // magnitude-normalized by the head norm, so this path carries the component
  // of the noise estimate that scales with the token's own content.
  Mat<S> head_skip;  // patch_dim x patch_dim

  template <typename Fn>
  void visit(Fn&& fn) {
    embed.visit(fn);
    fn("pos", pos);
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit("blocks." + std::to_string(i), fn);
    fn("head.ln.g", head_ln_g);
    fn("head.ln.b", head_ln_b);
    fn("head.skip.w", head_skip);
    fn("head.out.w", head_w);
    fn("head.out.b", head_b);
  }

  int64_t param_count() {
    int64_t n = 0;
    visit([&](const std::string&, Mat<S>& m) { n += m.size(); });
    return n;
  }
};

using WeightsF = Weights<float>;
using WeightsD = Weights<double>;

// All tensors allocated with the right shapes, zero filled.
template <typename S>
Weights<S> zero_weights(const ModelConfig& cfg) {
  validate(cfg);
  const int c = cfg.width, dp = cfg.patch_dim(), da = cfg.appearance_dim;
  Weights<S> w;
  w.cfg = cfg;
  w.embed.patch_w.setZero(c, dp);
  w.embed.patch_b.setZero(1, c);
  w.embed.frame.setZero(cfg.max_frames, c);
  w.embed.appear_w.setZero(c, da);
  w.embed.appear_b.setZero(1, c);
  w.embed.time_w.setZero(c, c);
  w.embed.time_b.setZero(1, c);
  w.embed.flag.setZero(2, c);
  w.embed.mask_token.setZero(1, dp);
  w.pos.setZero(cfg.tokens_per_frame(), c);
  w.blocks.resize(cfg.depth);
  for (auto& b : w.blocks) {
    b.ln1_g.setZero(1, c);
    b.ln1_b.setZero(1, c);
    b.wqkv.setZero(3 * c, c);
    b.bqkv.setZero(1, 3 * c);
    b.wo.setZero(c, c);
    b.bo.setZero(1, c);
    b.ln2_g.setZero(1, c);
    b.ln2_b.setZero(1, c);
    b.w1.setZero(4 * c, c);
    b.b1.setZero(1, 4 * c);
    b.w2.setZero(c, 4 * c);
    b.b2.setZero(1, c);
  }
  w.head_ln_g.setZero(1, c);
  w.head_ln_b.setZero(1, c);
  w.head_w.setZero(dp, c);
  w.head_b.setZero(1, dp);
  w.head_skip.setZero(dp, dp);
  return w;
}

// Deterministic init: weight matrices normal(0, 0.02), biases zero, layer norm
// gains one. Draw order follows the visit order, so a seed pins every value.
template <typename S>
Weights<S> init_weights(const ModelConfig& cfg, uint64_t seed) {
  Weights<S> w = zero_weights<S>(cfg);
  Rng rng = Rng::derive(seed, 0x696e6974ull);
  w.visit([&](const std::string& name, Mat<S>& m) {
    bool gain = name.size() >= 2 && name.substr(name.size() - 2) == ".g";
    bool bias = name.size() >= 2 && name.substr(name.size() - 2) == ".b";
    bool qb = name.find(".bqkv") != std::string::npos || name.find(".bo") != std::string::npos ||
              name.find(".b1") != std::string::npos || name.find(".b2") != std::string::npos;
    if (gain) {
      m.setOnes();
    } else if (bias || qb) {
      // zeros; draws not consumed so shapes stay seed-stable across variants
    } else {
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
          m(i, j) = static_cast<S>(rng.normal() * 0.02);
    }
  });
  return w;
}

template <typename To, typename From>
Weights<To> cast_weights(Weights<From>& src) {
  Weights<To> dst = zero_weights<To>(src.cfg);
  std::vector<Mat<From>*> tensors;
  src.visit([&](const std::string&, Mat<From>& m) { tensors.push_back(&m); });
  size_t k = 0;
  dst.visit([&](const std::string&, Mat<To>& m) {
    m = tensors[k++]->template cast<To>();
  });
  return dst;
}

int64_t param_count(const ModelConfig& cfg);

namespace nn {

inline constexpr double kLnEps = 1e-5;

template <typename S>
void layernorm(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, Mat<S>& y) {
  const Eigen::Index c = x.cols();
  y.resize(x.rows(), c);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    S mu = x.row(i).mean();
    S var = (x.row(i).array() - mu).square().mean();
    S inv = S(1) / std::sqrt(var + S(kLnEps));
    y.row(i) = (((x.row(i).array() - mu) * inv) * g.row(0).array() + b.row(0).array()).matrix();
  }
}

template <typename S>
void layernorm_backward(const Mat<S>& x, const Mat<S>& g, const Mat<S>& dy, Mat<S>& dx,
                        Mat<S>& dg, Mat<S>& db) {
  const Eigen::Index c = x.cols();
  dx.resize(x.rows(), c);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    S mu = x.row(i).mean();
    S var = (x.row(i).array() - mu).square().mean();
    S inv = S(1) / std::sqrt(var + S(kLnEps));
    auto xhat = ((x.row(i).array() - mu) * inv).eval();
    auto dxhat = (dy.row(i).array() * g.row(0).array()).eval();
    S m1 = dxhat.mean();
    S m2 = (dxhat * xhat).mean();
    dx.row(i) = ((dxhat - m1 - xhat * m2) * inv).matrix();
    dg.row(0).array() += dy.row(i).array() * xhat;
    db.row(0).array() += dy.row(i).array();
  }
}

template <typename S>
S gelu(S x) {
  const S k = S(0.7978845608028654);  // sqrt(2/pi)
  S u = k * (x + S(0.044715) * x * x * x);
  return S(0.5) * x * (S(1) + std::tanh(u));
}

template <typename S>
S gelu_grad(S x) {
  const S k = S(0.7978845608028654);
  S u = k * (x + S(0.044715) * x * x * x);
  S th = std::tanh(u);
  S sech2 = S(1) - th * th;
  return S(0.5) * (S(1) + th) + S(0.5) * x * sech2 * k * (S(1) + S(3) * S(0.044715) * x * x);
}

template <typename S>
void softmax_rows(Mat<S>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    S mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace nn

template <typename S>
struct ForwardCache {
  std::vector<Mat<S>> xs;     // depth + 1 entries: block inputs and final output
  std::vector<Mat<S>> x_mid;  // per block: after the attention residual
};

namespace detail {

// Attention probabilities are not cached; backward recomputes them per head
// from the cached block inputs to keep memory linear in sequence length.
template <typename S>
void block_forward(const BlockParams<S>& p, int heads, const Mat<S>& x, Mat<S>& x_mid,
                   Mat<S>& out) {
  const Eigen::Index n = x.rows(), c = x.cols();
  const Eigen::Index dh = c / heads;
  const S scale = S(1) / std::sqrt(S(double(dh)));

  Mat<S> h1;
  nn::layernorm(x, p.ln1_g, p.ln1_b, h1);
  Mat<S> qkv = h1 * p.wqkv.transpose();
  qkv.rowwise() += p.bqkv.row(0);
  Mat<S> attn(n, c);
  Mat<S> scores;
  for (int h = 0; h < heads; ++h) {
    auto Q = qkv.block(0, h * dh, n, dh);
    auto K = qkv.block(0, c + h * dh, n, dh);
    auto V = qkv.block(0, 2 * c + h * dh, n, dh);
    scores.noalias() = Q * K.transpose() * scale;
    nn::softmax_rows(scores);
    attn.block(0, h * dh, n, dh).noalias() = scores * V;
  }
  Mat<S> ao = attn * p.wo.transpose();
  ao.rowwise() += p.bo.row(0);
  x_mid = x + ao;

  Mat<S> h2;
  nn::layernorm(x_mid, p.ln2_g, p.ln2_b, h2);
  Mat<S> hid = h2 * p.w1.transpose();
  hid.rowwise() += p.b1.row(0);
  Mat<S> act = hid.unaryExpr([](S v) { return nn::gelu(v); });
  out = act * p.w2.transpose();
  out.rowwise() += p.b2.row(0);
  out += x_mid;
}

template <typename S>
void block_backward(const BlockParams<S>& p, int heads, const Mat<S>& x, const Mat<S>& x_mid,
                    const Mat<S>& dy, Mat<S>& dx, BlockParams<S>& g) {
  const Eigen::Index n = x.rows(), c = x.cols();
  const Eigen::Index dh = c / heads;
  const S scale = S(1) / std::sqrt(S(double(dh)));

  // MLP path, hidden activations recomputed.
  Mat<S> h2;
  nn::layernorm(x_mid, p.ln2_g, p.ln2_b, h2);
  Mat<S> hid = h2 * p.w1.transpose();
  hid.rowwise() += p.b1.row(0);
  Mat<S> act = hid.unaryExpr([](S v) { return nn::gelu(v); });

  g.w2.noalias() += dy.transpose() * act;
  g.b2.row(0) += dy.colwise().sum();
  Mat<S> d_act = dy * p.w2;
  Mat<S> d_hid = d_act.binaryExpr(hid, [](S da, S h) { return da * nn::gelu_grad(h); });
  g.w1.noalias() += d_hid.transpose() * h2;
  g.b1.row(0) += d_hid.colwise().sum();
  Mat<S> d_h2 = d_hid * p.w1;
  Mat<S> d_ln2;
  nn::layernorm_backward(x_mid, p.ln2_g, d_h2, d_ln2, g.ln2_g, g.ln2_b);
  Mat<S> d_x_mid = dy + d_ln2;

  // Attention path, probabilities recomputed per head.
  Mat<S> h1;
  nn::layernorm(x, p.ln1_g, p.ln1_b, h1);
  Mat<S> qkv = h1 * p.wqkv.transpose();
  qkv.rowwise() += p.bqkv.row(0);

  Mat<S> attn(n, c);
  Mat<S> d_qkv = Mat<S>::Zero(n, 3 * c);
  Mat<S> d_attn;  // filled after attn is rebuilt
  Mat<S> scores, dA, dS;
  // First rebuild attn to get wo gradients, then per-head backward.
  for (int h = 0; h < heads; ++h) {
    auto Q = qkv.block(0, h * dh, n, dh);
    auto K = qkv.block(0, c + h * dh, n, dh);
    auto V = qkv.block(0, 2 * c + h * dh, n, dh);
    scores.noalias() = Q * K.transpose() * scale;
    nn::softmax_rows(scores);
    attn.block(0, h * dh, n, dh).noalias() = scores * V;
  }
  g.wo.noalias() += d_x_mid.transpose() * attn;
  g.bo.row(0) += d_x_mid.colwise().sum();
  d_attn = d_x_mid * p.wo;

  for (int h = 0; h < heads; ++h) {
    auto Q = qkv.block(0, h * dh, n, dh);
    auto K = qkv.block(0, c + h * dh, n, dh);
    auto V = qkv.block(0, 2 * c + h * dh, n, dh);
    scores.noalias() = Q * K.transpose() * scale;
    nn::softmax_rows(scores);
    auto dOh = d_attn.block(0, h * dh, n, dh);
    d_qkv.block(0, 2 * c + h * dh, n, dh).noalias() = scores.transpose() * dOh;
    dA.noalias() = dOh * V.transpose();
    Vec<S> rs = (dA.array() * scores.array()).rowwise().sum();
    dS = (scores.array() * (dA.colwise() - rs).array()).matrix();
    d_qkv.block(0, h * dh, n, dh).noalias() = dS * K * scale;
    d_qkv.block(0, c + h * dh, n, dh).noalias() = dS.transpose() * Q * scale;
  }

  g.wqkv.noalias() += d_qkv.transpose() * h1;
  g.bqkv.row(0) += d_qkv.colwise().sum();
  Mat<S> d_h1 = d_qkv * p.wqkv;
  Mat<S> d_ln1;
  nn::layernorm_backward(x, p.ln1_g, d_h1, d_ln1, g.ln1_g, g.ln1_b);
  dx = d_x_mid + d_ln1;
}

template <typename S>
void check_sequence(const Weights<S>& w, const RawSequence& seq) {
  MVDF_CHECK(seq.frame_count >= 1 && seq.frame_count <= w.cfg.max_frames,
             "forward: frame count " << seq.frame_count << " outside [1, " << w.cfg.max_frames
                                     << "]");
  MVDF_CHECK(seq.tokens_per_frame == w.cfg.tokens_per_frame(),
             "forward: tokens per frame mismatch");
  MVDF_CHECK(seq.patch_dim == w.cfg.patch_dim(), "forward: patch dim mismatch");
  MVDF_CHECK(!seq.appearance_enabled || seq.descriptors.cols() == w.cfg.appearance_dim,
             "forward: appearance width mismatch");
  for (const auto& m : seq.meta) {
    MVDF_CHECK(m.frame_index >= 0 && m.frame_index < seq.frame_count,
               "forward: frame index out of range");
    MVDF_CHECK(m.spatial_index >= 0 && m.spatial_index < seq.tokens_per_frame,
               "forward: spatial index out of range");
  }
}

}  // namespace detail

// Per-token noise prediction in patch space. Layout never enters: the same
// weights process any mix of clean and noisy frames.
template <typename S>
Mat<S> forward(const Weights<S>& w, const RawSequence& seq, ForwardCache<S>* cache = nullptr) {
  detail::check_sequence(w, seq);
  Mat<S> x = assemble_sequence(seq, w.embed);
  for (int i = 0; i < seq.token_count(); ++i) x.row(i) += w.pos.row(seq.meta[i].spatial_index);

  ForwardCache<S> local;
  ForwardCache<S>& cc = cache ? *cache : local;
  cc.xs.clear();
  cc.x_mid.assign(w.cfg.depth, Mat<S>());
  cc.xs.reserve(w.cfg.depth + 1);
  cc.xs.push_back(std::move(x));
  for (int b = 0; b < w.cfg.depth; ++b) {
    Mat<S> out;
    detail::block_forward(w.blocks[b], w.cfg.heads, cc.xs[b], cc.x_mid[b], out);
    cc.xs.push_back(std::move(out));
  }
  Mat<S> hN;
  nn::layernorm(cc.xs.back(), w.head_ln_g, w.head_ln_b, hN);
  Mat<S> pred = hN * w.head_w.transpose();
  pred.rowwise() += w.head_b.row(0);
  pred.noalias() += detail::effective_patches(seq, w.embed) * w.head_skip.transpose();
  if (!cache) {
    local.xs.clear();
    local.x_mid.clear();
  }
  return pred;
}

// Accumulates parameter gradients given the gradient of the loss with respect
// to the predictions. Requires the cache produced by forward().
template <typename S>
void backward(const Weights<S>& w, const RawSequence& seq, const ForwardCache<S>& cache,
              const Mat<S>& dpred, Weights<S>& grads) {
  const Mat<S>& x_last = cache.xs.back();
  Mat<S> hN;
  nn::layernorm(x_last, w.head_ln_g, w.head_ln_b, hN);
  grads.head_w.noalias() += dpred.transpose() * hN;
  grads.head_b.row(0) += dpred.colwise().sum();
  {
    Mat<S> P = detail::effective_patches(seq, w.embed);
    grads.head_skip.noalias() += dpred.transpose() * P;
    // Masked tokens substitute the learned mask token, so the skip path also
    // feeds its gradient.
    Mat<S> dP = dpred * w.head_skip;
    for (int i = 0; i < seq.token_count(); ++i)
      if (seq.meta[i].masked) grads.embed.mask_token.row(0) += dP.row(i);
  }
  Mat<S> d_hN = dpred * w.head_w;
  Mat<S> dx;
  nn::layernorm_backward(x_last, w.head_ln_g, d_hN, dx, grads.head_ln_g, grads.head_ln_b);

  for (int b = w.cfg.depth - 1; b >= 0; --b) {
    Mat<S> dxb;
    detail::block_backward(w.blocks[b], w.cfg.heads, cache.xs[b], cache.x_mid[b], dx, dxb,
                           grads.blocks[b]);
    dx = std::move(dxb);
  }
  for (int i = 0; i < seq.token_count(); ++i)
    grads.pos.row(seq.meta[i].spatial_index) += dx.row(i);
  assemble_backward(seq, w.embed, dx, grads.embed);
}

// Mean squared error over loss-masked tokens (all patch components). A zero
// mask yields value 0 with count 0; callers treat count == 0 as the warning.
template <typename S>
struct MaskedLoss {
  S value = S(0);
  int masked_count = 0;
};

template <typename S>
MaskedLoss<S> masked_mse(const Mat<S>& pred, const Mat<S>& target,
                         const std::vector<uint8_t>& mask) {
  MVDF_CHECK(pred.rows() == target.rows() && pred.cols() == target.cols(),
             "masked_mse: shape mismatch");
  MVDF_CHECK(static_cast<int>(mask.size()) == pred.rows(), "masked_mse: mask length mismatch");
  MaskedLoss<S> out;
  S acc = S(0);
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!mask[i]) continue;
    acc += (pred.row(i) - target.row(i)).squaredNorm();
    ++out.masked_count;
  }
  if (out.masked_count > 0)
    out.value = acc / (S(out.masked_count) * S(double(pred.cols())));
  return out;
}

template <typename S>
Mat<S> masked_mse_grad(const Mat<S>& pred, const Mat<S>& target,
                       const std::vector<uint8_t>& mask, int masked_count) {
  Mat<S> d = Mat<S>::Zero(pred.rows(), pred.cols());
  if (masked_count == 0) return d;
  S norm = S(2) / (S(masked_count) * S(double(pred.cols())));
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    if (mask[i]) d.row(i) = (pred.row(i) - target.row(i)) * norm;
  return d;
}

// Fused loss + gradient entry point used by training and the gradient check.
template <typename S>
S loss_and_grads(const Weights<S>& w, const RawSequence& seq, const Mat<S>& target_eps,
                 const std::vector<uint8_t>& loss_mask, Weights<S>& grads) {
  ForwardCache<S> cache;
  Mat<S> pred = forward(w, seq, &cache);
  MaskedLoss<S> loss = masked_mse(pred, target_eps, loss_mask);
  Mat<S> dpred = masked_mse_grad(pred, target_eps, loss_mask, loss.masked_count);
  backward(w, seq, cache, dpred, grads);
  return loss.value;
}

}  // namespace mvdf

#include "mvdf/infer.hpp"

#include <algorithm>
#include <cmath>

namespace mvdf {

namespace {

void check_request(const ModelConfig& cfg, const GenerationRequest& req, bool single_window) {
  const int n = int(req.keyframes.size());
  MVDF_CHECK(n >= 2, "generate: need at least 2 keyframes, got " << n);
  if (single_window) MVDF_CHECK(n <= 5, "generate: one window takes at most 5 keyframes");
  MVDF_CHECK(req.masks.empty() || req.masks.size() == req.keyframes.size(),
             "generate: mask count must match keyframe count");
  MVDF_CHECK(req.descriptors.empty() || req.descriptors.size() == req.keyframes.size(),
             "generate: descriptor count must match keyframe count");
  MVDF_CHECK(req.steps >= 1 && req.steps <= req.diffusion_steps,
             "generate: steps must lie in [1, diffusion_steps]");
  for (const auto& img : req.keyframes)
    MVDF_CHECK(img.height == cfg.image_h && img.width == cfg.image_w,
               "generate: keyframe is " << img.width << "x" << img.height << ", model expects "
                                        << cfg.image_w << "x" << cfg.image_h);
  for (const auto& m : req.masks)
    MVDF_CHECK(m.height == cfg.image_h && m.width == cfg.image_w,
               "generate: mask size must match the model image size");
  for (const auto& d : req.descriptors)
    MVDF_CHECK(d.rows() == 1 && d.cols() == cfg.appearance_dim,
               "generate: descriptors must be 1 x " << cfg.appearance_dim);
}

uint64_t mix_hash(uint64_t acc, uint64_t piece) { return mix64(acc, piece); }

}  // namespace

uint64_t weights_digest(Weights<float>& w) {
  uint64_t h = 0xcbf29ce484222325ull;
  w.visit([&](const std::string& name, Matf& m) {
    h = fnv1a(name, h);
    h = fnv1a(m.data(), sizeof(float) * size_t(m.size()), h);
  });
  return h;
}

uint64_t request_digest(const GenerationRequest& req) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& img : req.keyframes)
    h = fnv1a(img.data.data(), sizeof(float) * img.data.size(), h);
  for (const auto& m : req.masks) h = fnv1a(m.data.data(), m.data.size(), h);
  for (const auto& d : req.descriptors)
    h = fnv1a(d.data(), sizeof(float) * size_t(d.size()), h);
  if (req.appearance_source.pixel_count() > 0)
    h = fnv1a(req.appearance_source.data.data(),
              sizeof(float) * req.appearance_source.data.size(), h);
  h = mix_hash(h, uint64_t(req.use_appearance));
  h = mix_hash(h, uint64_t(req.steps));
  h = mix_hash(h, req.seed);
  h = mix_hash(h, uint64_t(req.schedule));
  h = mix_hash(h, uint64_t(req.diffusion_steps));
  return h;
}

GenerationResult generate(Weights<float>& w, const GenerationRequest& req) {
  const ModelConfig& cfg = w.cfg;
  check_request(cfg, req, true);

  const int n = int(req.keyframes.size());
  const int frames = 16 * (n - 1) + 1;
  MVDF_CHECK(frames <= cfg.max_frames,
             "generate: " << frames << " frames exceed the model budget of " << cfg.max_frames);
  const int tpf = cfg.tokens_per_frame();

  NoiseSchedule sched = build_schedule(req.diffusion_steps, req.schedule);
  std::vector<int> idx = make_timestep_subsequence(sched.T, req.steps);

  RawSequence seq;
  seq.frame_count = frames;
  seq.tokens_per_frame = tpf;
  seq.grid_h = cfg.image_h / cfg.patch_size;
  seq.grid_w = cfg.image_w / cfg.patch_size;
  seq.patch_dim = cfg.patch_dim();
  seq.patches.setZero(seq.token_count(), seq.patch_dim);
  seq.meta.assign(seq.token_count(), TokenMeta{});
  seq.descriptors.setZero(frames, cfg.appearance_dim);
  seq.appearance_enabled = req.use_appearance;

  // Keyframe content, metadata, and per-keyframe descriptors.
  Matf key_desc(n, cfg.appearance_dim);
  for (int a = 0; a < n; ++a) {
    int f = 16 * a;
    seq.patches.middleRows(f * tpf, tpf) =
        default_codec().encode(req.keyframes[a], cfg.patch_size).features;
    std::vector<uint8_t> hidden(tpf, 0);
    if (!req.masks.empty()) hidden = transient_token_flags(req.masks[a], cfg.patch_size);
    for (int k = 0; k < tpf; ++k) {
      TokenMeta& m = seq.meta[f * tpf + k];
      m.frame_index = f;
      m.spatial_index = k;
      m.clean = true;
      m.timestep = 0;
      m.masked = hidden[k] != 0;
    }
    if (!req.descriptors.empty())
      key_desc.row(a) = req.descriptors[a].row(0);
    else
      key_desc.row(a) = appearance_descriptor(req.keyframes[a], cfg.appearance_dim).row(0);
  }

  // Generated frames all share one appearance hint: the explicit source
  // image when given, the first keyframe otherwise.
  Matf inter_desc = req.appearance_source.pixel_count() > 0
                        ? appearance_descriptor(req.appearance_source, cfg.appearance_dim)
                        : Matf(key_desc.row(0));
  for (int f = 0; f < frames; ++f) {
    if (f % 16 == 0) {
      seq.descriptors.row(f) = key_desc.row(f / 16);
      continue;
    }
    seq.descriptors.row(f) = inter_desc.row(0);
    for (int k = 0; k < tpf; ++k) {
      TokenMeta& m = seq.meta[f * tpf + k];
      m.frame_index = f;
      m.spatial_index = k;
      m.clean = false;
    }
  }

  // Intermediates start as pure noise; keyframes never move.
  Rng rng = Rng::derive(req.seed, 0x67656e6572ull);
  for (int f = 0; f < frames; ++f) {
    if (f % 16 == 0) continue;
    for (int k = 0; k < tpf; ++k)
      for (int d = 0; d < seq.patch_dim; ++d) seq.patches(f * tpf + k, d) = rng.normalf();
  }

  for (size_t s = 0; s < idx.size(); ++s) {
    int t = idx[s];
    int t_prev = s + 1 < idx.size() ? idx[s + 1] : kFinalStep;
    for (int i = 0; i < seq.token_count(); ++i)
      if (!seq.meta[i].clean) seq.meta[i].timestep = t;
    seq.layout = detect_layout(seq.meta, frames, tpf);

    Matf pred = forward(w, seq);
    for (int f = 0; f < frames; ++f) {
      if (f % 16 == 0) continue;
      auto rows = seq.patches.middleRows(f * tpf, tpf);
      Matf stepped = ddim_step(Matf(rows), Matf(pred.middleRows(f * tpf, tpf)), t, t_prev, sched);
      rows = stepped;
    }
  }

  GenerationResult out;
  out.request_hash = request_digest(req);
  out.weights_hash = weights_digest(w);
  for (int f = 0; f < frames; ++f) {
    if (f % 16 == 0) continue;
    FrameLatent lat;
    lat.grid_h = seq.grid_h;
    lat.grid_w = seq.grid_w;
    lat.patch_dim = seq.patch_dim;
    lat.features = seq.patches.middleRows(f * tpf, tpf);
    out.frames.push_back(default_codec().decode(lat, cfg.patch_size));
  }
  return out;
}

GenerationResult generate_chained(Weights<float>& w, const GenerationRequest& req) {
  check_request(w.cfg, req, false);
  const int n = int(req.keyframes.size());
  // One window holds at most 5 keyframes, fewer if the model's frame budget
  // cannot seat 16 * (keys - 1) + 1 positions.
  const int window_keys = std::min(5, (w.cfg.max_frames - 1) / 16 + 1);
  MVDF_CHECK(window_keys >= 2, "generate_chained: model budget of " << w.cfg.max_frames
                                                                    << " frames cannot fit one gap");
  if (n <= window_keys) return generate(w, req);

  GenerationResult out;
  out.request_hash = request_digest(req);
  out.weights_hash = weights_digest(w);

  int start = 0, window = 0;
  while (start < n - 1) {
    int end = std::min(start + window_keys - 1, n - 1);
    GenerationRequest sub = req;
    // Later windows must not silently re-anchor appearance on their own
    // first keyframe; the whole chain follows the first input.
    if (sub.appearance_source.pixel_count() == 0 && req.descriptors.empty())
      sub.appearance_source = req.keyframes[0];
    sub.keyframes.assign(req.keyframes.begin() + start, req.keyframes.begin() + end + 1);
    if (!req.masks.empty())
      sub.masks.assign(req.masks.begin() + start, req.masks.begin() + end + 1);
    if (!req.descriptors.empty())
      sub.descriptors.assign(req.descriptors.begin() + start, req.descriptors.begin() + end + 1);
    sub.seed = mix64(req.seed, 0x636861696eull, uint64_t(window));
    GenerationResult part = generate(w, sub);
    out.frames.insert(out.frames.end(), part.frames.begin(), part.frames.end());
    start = end;
    ++window;
  }
  return out;
}

std::vector<Image> full_strip(const std::vector<Image>& keyframes,
                              const std::vector<Image>& generated) {
  MVDF_CHECK(keyframes.size() >= 2, "full_strip: need at least 2 keyframes");
  MVDF_CHECK(generated.size() == 15 * (keyframes.size() - 1),
             "full_strip: generated count must be 15 * (keyframes - 1)");
  std::vector<Image> strip;
  for (size_t a = 0; a + 1 < keyframes.size(); ++a) {
    strip.push_back(keyframes[a]);
    for (int i = 0; i < 15; ++i) strip.push_back(generated[15 * a + i]);
  }
  strip.push_back(keyframes.back());
  return strip;
}

double reorder_sensitivity(Weights<float>& w, const GenerationRequest& req) {
  MVDF_CHECK(req.keyframes.size() >= 3, "reorder_sensitivity: need at least 3 keyframes");
  GenerationRequest swapped = req;
  std::swap(swapped.keyframes[1], swapped.keyframes[2]);
  if (!swapped.masks.empty()) std::swap(swapped.masks[1], swapped.masks[2]);
  if (!swapped.descriptors.empty()) std::swap(swapped.descriptors[1], swapped.descriptors[2]);

  GenerationResult a = generate_chained(w, req);
  GenerationResult b = generate_chained(w, swapped);
  MVDF_CHECK(a.frames.size() == b.frames.size(), "reorder_sensitivity: frame count mismatch");

  double total = 0;
  for (size_t i = 0; i < a.frames.size(); ++i) {
    const auto& fa = a.frames[i].data;
    const auto& fb = b.frames[i].data;
    double sq = 0;
    for (size_t k = 0; k < fa.size(); ++k) sq += double(fa[k] - fb[k]) * (fa[k] - fb[k]);
    total += std::sqrt(sq / double(fa.size()));
  }
  return total / double(a.frames.size());
}

}  // namespace mvdf

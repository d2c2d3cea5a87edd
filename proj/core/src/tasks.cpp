#include "mvdf/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <thread>

#include "mvdf/synth.hpp"

namespace mvdf {

namespace {

namespace fs = std::filesystem;

float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

float luma_mean(const Image& img) {
  double acc = 0;
  for (size_t p = 0; p < img.pixel_count(); ++p)
    acc += luma(img.data[3 * p], img.data[3 * p + 1], img.data[3 * p + 2]);
  return img.pixel_count() ? float(acc / double(img.pixel_count())) : 0.0f;
}

void clamp_image(Image& img) {
  for (auto& v : img.data) v = clamp01(v);
}

Matf encode_frame(const Image& img, const ModelConfig& cfg) {
  MVDF_CHECK(img.height == cfg.image_h && img.width == cfg.image_w,
             "encode_frame: image is " << img.width << "x" << img.height << ", model expects "
                                       << cfg.image_w << "x" << cfg.image_h);
  return default_codec().encode(img, cfg.patch_size).features;
}

void init_sequence(RawSequence& seq, const ModelConfig& cfg, int frame_count) {
  seq.frame_count = frame_count;
  seq.tokens_per_frame = cfg.tokens_per_frame();
  seq.grid_h = cfg.image_h / cfg.patch_size;
  seq.grid_w = cfg.image_w / cfg.patch_size;
  seq.patch_dim = cfg.patch_dim();
  seq.patches.setZero(seq.token_count(), seq.patch_dim);
  seq.meta.assign(seq.token_count(), TokenMeta{});
  seq.descriptors.setZero(frame_count, cfg.appearance_dim);
  for (int i = 0; i < seq.token_count(); ++i) {
    seq.meta[i].frame_index = i / seq.tokens_per_frame;
    seq.meta[i].spatial_index = i % seq.tokens_per_frame;
  }
}

// Shared draw discipline: the coin is consumed for every condition frame, so
// whether one frame hides a rectangle never shifts another frame's stream
// position within the same builder call order.
void maybe_hide_rectangle(RawSequence& seq, int frame, Rng& rng, const TaskParams& tp) {
  if (rng.uniform() >= tp.cond_mask_prob) return;
  auto rect = random_condition_mask(seq.grid_h, seq.grid_w, tp.cond_mask_region, rng);
  int base = frame * seq.tokens_per_frame;
  for (int s = 0; s < seq.tokens_per_frame; ++s)
    if (rect[s]) seq.meta[base + s].masked = true;
}

}  // namespace

Image color_jitter(const Image& img, Rng& rng, double strength) {
  MVDF_CHECK(strength >= 0.0 && strength <= 1.0, "color_jitter: strength outside [0, 1]");
  double fb = 1.0 + rng.uniform(-strength, strength);
  double fc = 1.0 + rng.uniform(-strength, strength);
  double fs = 1.0 + rng.uniform(-strength, strength);
  double fh = rng.uniform(-0.25 * strength, 0.25 * strength);
  std::vector<int> order = {0, 1, 2, 3};
  rng.shuffle(order);

  Image out = img;
  for (int op : order) {
    switch (op) {
      case 0:  // brightness
        if (fb == 1.0) break;
        for (auto& v : out.data) v = float(v * fb);
        clamp_image(out);
        break;
      case 1: {  // contrast about the mean luma
        if (fc == 1.0) break;
        float m = luma_mean(out);
        for (auto& v : out.data) v = float((v - m) * fc + m);
        clamp_image(out);
        break;
      }
      case 2:  // saturation toward per-pixel luma
        if (fs == 1.0) break;
        for (size_t p = 0; p < out.pixel_count(); ++p) {
          float g = luma(out.data[3 * p], out.data[3 * p + 1], out.data[3 * p + 2]);
          for (int c = 0; c < 3; ++c)
            out.data[3 * p + c] = float((out.data[3 * p + c] - g) * fs + g);
        }
        clamp_image(out);
        break;
      default:  // hue rotation
        if (fh == 0.0) break;
        for (size_t p = 0; p < out.pixel_count(); ++p) {
          auto hsv = rgb_to_hsv(out.data[3 * p], out.data[3 * p + 1], out.data[3 * p + 2]);
          float h = float(hsv[0] + fh);
          h -= std::floor(h);
          auto rgb = hsv_to_rgb(h, hsv[1], hsv[2]);
          for (int c = 0; c < 3; ++c) out.data[3 * p + c] = rgb[c];
        }
        clamp_image(out);
        break;
    }
  }
  return out;
}

std::vector<uint8_t> random_condition_mask(int grid_h, int grid_w, double region, Rng& rng) {
  MVDF_CHECK(grid_h >= 1 && grid_w >= 1, "random_condition_mask: empty grid");
  MVDF_CHECK(region >= 0.0 && region <= 1.0, "random_condition_mask: region outside [0, 1]");
  int tokens = grid_h * grid_w;
  std::vector<uint8_t> flags(tokens, 0);
  long want = std::lround(region * tokens);
  if (want == 0) return flags;

  int best_h = 1, best_w = 1;
  long best_err = std::abs(long(1) - want);
  for (int h = 1; h <= grid_h; ++h) {
    long w = std::clamp(std::lround(double(want) / h), 1l, long(grid_w));
    long err = std::abs(h * w - want);
    if (err < best_err) {
      best_err = err;
      best_h = h;
      best_w = int(w);
    }
  }
  int y0 = int(rng.uniform_int(0, grid_h - best_h));
  int x0 = int(rng.uniform_int(0, grid_w - best_w));
  for (int y = y0; y < y0 + best_h; ++y)
    for (int x = x0; x < x0 + best_w; ++x) flags[size_t(y) * grid_w + x] = 1;
  return flags;
}

std::vector<SceneData> load_training_scenes(const std::string& dataset_dir) {
  std::vector<SceneData> out;
  for (const auto& dir : list_scene_dirs(dataset_dir)) {
    SceneData sd;
    for (int j = 0;; ++j) {
      fs::path img = fs::path(dir) / "photos" / (std::to_string(j) + ".png");
      if (!fs::exists(img)) break;
      sd.photos.push_back(read_png(img.string()));
      fs::path msk = fs::path(dir) / "photos" / (std::to_string(j) + ".mask.png");
      MVDF_CHECK(fs::exists(msk), "load_training_scenes: missing " << msk.string());
      sd.photo_masks.push_back(read_mask_png(msk.string()));
    }
    for (int f = 0;; ++f) {
      fs::path img = fs::path(dir) / "clip" / (std::to_string(f) + ".png");
      if (!fs::exists(img)) break;
      sd.clip.push_back(read_png(img.string()));
    }
    MVDF_CHECK(!sd.photos.empty() || !sd.clip.empty(),
               "load_training_scenes: no frames under " << dir);
    out.push_back(std::move(sd));
  }
  MVDF_CHECK(!out.empty(), "load_training_scenes: no scene_<id> directories in " << dataset_dir);
  return out;
}

TrainingSample build_inpainting_sample(const SceneData& scene, const ModelConfig& cfg,
                                       const NoiseSchedule& sched, Rng& rng,
                                       const TaskParams& tp) {
  const int avail = int(scene.photos.size());
  MVDF_CHECK(avail >= 2, "build_inpainting_sample: need at least 2 photos, have " << avail);
  MVDF_CHECK(scene.photo_masks.size() == scene.photos.size(),
             "build_inpainting_sample: photo/mask count mismatch");

  int n_cond = int(rng.uniform_int(1, std::min(4, avail - 1)));
  std::vector<int> order(avail);
  for (int i = 0; i < avail; ++i) order[i] = i;
  rng.shuffle(order);
  const int frames = n_cond + 1;
  MVDF_CHECK(frames <= cfg.max_frames, "build_inpainting_sample: frame budget exceeded");

  int t = int(rng.uniform_int(0, sched.T - 1));
  auto noised = select_inpaint_mask(cfg.tokens_per_frame(), tp.mask_ratio, rng);

  TrainingSample s;
  s.timestep = t;
  init_sequence(s.seq, cfg, frames);
  s.target_eps.setZero(s.seq.token_count(), s.seq.patch_dim);
  s.loss_mask.assign(s.seq.token_count(), 0);

  const int tpf = s.seq.tokens_per_frame;
  for (int f = 0; f < n_cond; ++f) {
    const Image& img = scene.photos[order[f]];
    s.seq.patches.middleRows(f * tpf, tpf) = encode_frame(img, cfg);
    s.seq.descriptors.row(f) = appearance_descriptor(img, cfg.appearance_dim);
    auto transient = transient_token_flags(scene.photo_masks[order[f]], cfg.patch_size);
    for (int k = 0; k < tpf; ++k) {
      TokenMeta& m = s.seq.meta[f * tpf + k];
      m.clean = true;
      m.timestep = 0;
      m.transient = transient[k] != 0;
      m.masked = m.transient;
    }
    maybe_hide_rectangle(s.seq, f, rng, tp);
  }

  const int tf = n_cond;  // target frame sits last
  const Image& target = scene.photos[order[n_cond]];
  Matf x0 = encode_frame(target, cfg);
  Matf eps = Matf::Zero(tpf, s.seq.patch_dim);
  for (int k = 0; k < tpf; ++k)
    if (noised[k])
      for (int d = 0; d < s.seq.patch_dim; ++d) eps(k, d) = rng.normalf();
  Matf xt = add_noise(x0, eps, t, sched);

  s.seq.descriptors.row(tf) = appearance_descriptor(target, cfg.appearance_dim);
  auto transient = transient_token_flags(scene.photo_masks[order[n_cond]], cfg.patch_size);
  for (int k = 0; k < tpf; ++k) {
    int i = tf * tpf + k;
    TokenMeta& m = s.seq.meta[i];
    m.transient = transient[k] != 0;
    if (noised[k]) {
      m.clean = false;
      m.timestep = t;
      s.seq.patches.row(i) = xt.row(k);
      s.target_eps.row(i) = eps.row(k);
      s.loss_mask[i] = m.transient ? 0 : 1;  // sprites are unpredictable; no loss there
    } else {
      m.clean = true;
      m.timestep = 0;
      s.seq.patches.row(i) = x0.row(k);
      m.masked = m.transient;
    }
  }

  s.seq.layout = detect_layout(s.seq.meta, frames, tpf);
  s.task = s.seq.layout;
  return s;
}

TrainingSample build_interpolation_sample(const SceneData& scene, const ModelConfig& cfg,
                                          const NoiseSchedule& sched, Rng& rng,
                                          const TaskParams& tp) {
  const int len = int(scene.clip.size());
  MVDF_CHECK(len >= 17, "build_interpolation_sample: need a clip of 17+ frames, have " << len);

  int n_max = std::min({5, 1 + (len - 1) / 16, 1 + (cfg.max_frames - 1) / 16});
  MVDF_CHECK(n_max >= 2, "build_interpolation_sample: model budget of " << cfg.max_frames
                                                                        << " frames cannot fit one gap");
  int n = int(rng.uniform_int(2, n_max));
  int m_max = std::clamp(std::min(tp.baseline_multiplier, (len - 1) / (16 * (n - 1))), 1,
                         (len - 1) / (16 * (n - 1)));
  int stride = int(rng.uniform_int(1, m_max));
  int span = 16 * stride * (n - 1);
  int p0 = int(rng.uniform_int(0, len - 1 - span));

  const int frames = 16 * (n - 1) + 1;
  MVDF_CHECK(frames <= cfg.max_frames, "build_interpolation_sample: frame budget exceeded");
  int t = int(rng.uniform_int(0, sched.T - 1));

  TrainingSample s;
  s.timestep = t;
  init_sequence(s.seq, cfg, frames);
  s.target_eps.setZero(s.seq.token_count(), s.seq.patch_dim);
  s.loss_mask.assign(s.seq.token_count(), 0);

  const int tpf = s.seq.tokens_per_frame;
  for (int f = 0; f < frames; ++f) {
    const Image& src = scene.clip[p0 + f * stride];
    bool keyframe = f % 16 == 0;
    if (keyframe) {
      Image aug = color_jitter(src, rng, tp.jitter_strength);
      s.seq.patches.middleRows(f * tpf, tpf) = encode_frame(aug, cfg);
      s.seq.descriptors.row(f) = appearance_descriptor(aug, cfg.appearance_dim);
      for (int k = 0; k < tpf; ++k) {
        TokenMeta& m = s.seq.meta[f * tpf + k];
        m.clean = true;
        m.timestep = 0;
      }
      maybe_hide_rectangle(s.seq, f, rng, tp);
    } else {
      Matf x0 = encode_frame(src, cfg);
      Matf eps(tpf, s.seq.patch_dim);
      for (int k = 0; k < tpf; ++k)
        for (int d = 0; d < s.seq.patch_dim; ++d) eps(k, d) = rng.normalf();
      s.seq.patches.middleRows(f * tpf, tpf) = add_noise(x0, eps, t, sched);
      s.target_eps.middleRows(f * tpf, tpf) = eps;
      s.seq.descriptors.row(f) = appearance_descriptor(src, cfg.appearance_dim);
      for (int k = 0; k < tpf; ++k) {
        TokenMeta& m = s.seq.meta[f * tpf + k];
        m.clean = false;
        m.timestep = t;
        s.loss_mask[f * tpf + k] = 1;
      }
    }
  }

  s.seq.layout = detect_layout(s.seq.meta, frames, tpf);
  s.task = s.seq.layout;
  return s;
}

TrainingSample build_training_sample(const SceneData& scene, const ModelConfig& cfg,
                                     const NoiseSchedule& sched, Rng& rng,
                                     const TaskParams& tp) {
  bool can_inpaint = scene.photos.size() >= 2;
  bool can_interp = scene.clip.size() >= 17;
  MVDF_CHECK(can_inpaint || can_interp, "build_training_sample: scene supports neither task");
  bool inpaint = rng.uniform() < tp.task_mix;
  if (inpaint && !can_inpaint) inpaint = false;
  if (!inpaint && !can_interp) inpaint = true;
  return inpaint ? build_inpainting_sample(scene, cfg, sched, rng, tp)
                 : build_interpolation_sample(scene, cfg, sched, rng, tp);
}

float sample_loss(const Weights<float>& w, const TrainingSample& s) {
  Matf pred = forward(w, s.seq);
  return masked_mse(pred, s.target_eps, s.loss_mask).value;
}

AdamState make_adam_state(Weights<float>& w) {
  AdamState st;
  w.visit([&](const std::string&, Matf& p) {
    st.m.push_back(Matf::Zero(p.rows(), p.cols()));
    st.v.push_back(Matf::Zero(p.rows(), p.cols()));
  });
  return st;
}

void adamw_update(Weights<float>& w, Weights<float>& grads, AdamState& st,
                  const TrainConfig& cfg) {
  std::vector<Matf*> gs;
  grads.visit([&](const std::string&, Matf& g) { gs.push_back(&g); });
  MVDF_CHECK(gs.size() == st.m.size(), "adamw_update: state/parameter count mismatch");

  st.t += 1;
  const float bc1 = float(1.0 - std::pow(cfg.beta1, double(st.t)));
  const float bc2 = float(1.0 - std::pow(cfg.beta2, double(st.t)));
  const float b1 = float(cfg.beta1), b2 = float(cfg.beta2);
  const float lr = float(cfg.lr), eps = float(cfg.adam_eps), wd = float(cfg.weight_decay);

  size_t k = 0;
  w.visit([&](const std::string& name, Matf& p) {
    const Matf& g = *gs[k];
    Matf& m = st.m[k];
    Matf& v = st.v[k];
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g.cwiseProduct(g);
    Matf upd = (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    auto leaf = name.substr(name.rfind('.') + 1);
    if (!leaf.empty() && leaf[0] == 'w') upd.array() += wd * p.array();
    p.array() -= lr * upd.array();
    ++k;
  });
}

Trainer::Trainer(const ModelConfig& model_in, const TrainConfig& cfg_in)
    : model(model_in),
      cfg(cfg_in),
      sched(build_schedule(cfg_in.diffusion_steps, cfg_in.schedule)),
      weights(init_weights<float>(model_in, cfg_in.seed)),
      opt(make_adam_state(weights)) {}

void Trainer::attach_data(std::vector<SceneData> data) {
  MVDF_CHECK(!data.empty(), "attach_data: empty scene list");
  scenes = std::move(data);
}

float Trainer::train_step() {
  MVDF_CHECK(!scenes.empty(), "train_step: no training data attached");
  MVDF_CHECK(cfg.batch >= 1 && cfg.batch <= 8192, "train_step: batch outside [1, 8192]");
  MVDF_CHECK(cfg.threads >= 1, "train_step: threads must be positive");

  // Each sample owns a derived stream, so the batch is reproducible no matter
  // how it is split across workers.
  auto run_sample = [&](int k, Weights<float>& grads) {
    Rng rng = Rng::derive(cfg.seed, 0x73746570ull, uint64_t(step) * 8192 + uint64_t(k));
    int si = int(rng.uniform_int(0, int64_t(scenes.size()) - 1));
    TrainingSample s = build_training_sample(scenes[si], model, sched, rng, cfg.task);
    return loss_and_grads(weights, s.seq, s.target_eps, s.loss_mask, grads);
  };

  Weights<float> grads = zero_weights<float>(model);
  double loss = 0;
  const int workers = std::min(cfg.threads, cfg.batch);
  if (workers <= 1) {
    for (int k = 0; k < cfg.batch; ++k) loss += run_sample(k, grads);
  } else {
    // Contiguous sample ranges per worker; partial sums merge in worker order,
    // so the result is a pure function of the config.
    std::vector<Weights<float>> partial(workers);
    std::vector<double> part_loss(workers, 0.0);
    std::vector<std::thread> pool;
    for (int wk = 0; wk < workers; ++wk) {
      partial[wk] = zero_weights<float>(model);
      pool.emplace_back([&, wk] {
        const int lo = wk * cfg.batch / workers, hi = (wk + 1) * cfg.batch / workers;
        for (int k = lo; k < hi; ++k) part_loss[wk] += run_sample(k, partial[wk]);
      });
    }
    for (auto& th : pool) th.join();
    std::vector<Matf*> sink;
    grads.visit([&](const std::string&, Matf& g) { sink.push_back(&g); });
    for (int wk = 0; wk < workers; ++wk) {
      loss += part_loss[wk];
      size_t i = 0;
      partial[wk].visit([&](const std::string&, Matf& g) { *sink[i++] += g; });
    }
  }
  loss /= double(cfg.batch);
  if (cfg.batch > 1) {
    const float inv = 1.0f / float(cfg.batch);
    grads.visit([&](const std::string&, Matf& g) { g *= inv; });
  }
  MVDF_CHECK(std::isfinite(loss), "train_step: loss diverged at step " << step);

  if (cfg.grad_clip > 0) {
    double sq = 0;
    grads.visit([&](const std::string&, Matf& g) { sq += double(g.squaredNorm()); });
    double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) {
      const float sc = float(cfg.grad_clip / norm);
      grads.visit([&](const std::string&, Matf& g) { g *= sc; });
    }
  }

  adamw_update(weights, grads, opt, cfg);
  loss_log.push_back(float(loss));
  ++step;
  return float(loss);
}

}  // namespace mvdf

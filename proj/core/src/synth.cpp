#include "mvdf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

namespace mvdf {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// C1 value noise: bilinear lattice interpolation with smoothstep weights.
struct NoiseLattice {
  int n = 0;
  std::vector<float> values;  // (n + 1)^2

  static NoiseLattice make(int n, Rng& rng) {
    NoiseLattice l;
    l.n = n;
    l.values.resize(size_t(n + 1) * (n + 1));
    for (auto& v : l.values) v = float(rng.uniform());
    return l;
  }

  float sample(double u, double v) const {  // u, v in [0, 1]
    double x = u * n, y = v * n;
    int x0 = std::min(int(x), n - 1), y0 = std::min(int(y), n - 1);
    double fx = x - x0, fy = y - y0;
    fx = fx * fx * (3.0 - 2.0 * fx);
    fy = fy * fy * (3.0 - 2.0 * fy);
    auto at = [&](int yy, int xx) { return double(values[size_t(yy) * (n + 1) + xx]); };
    double a = at(y0, x0) * (1 - fx) + at(y0, x0 + 1) * fx;
    double b = at(y0 + 1, x0) * (1 - fx) + at(y0 + 1, x0 + 1) * fx;
    return float(a * (1 - fy) + b * fy);
  }
};

bool primitive_covers(const Primitive& p, double x, double y) {
  double dx = x - p.x, dy = y - p.y;
  switch (p.kind) {
    case 0: return dx * dx + dy * dy <= p.a * p.a;
    case 1: return std::abs(dx) <= p.a && std::abs(dy) <= p.b;
    default: {
      double d = -dx * std::sin(p.angle) + dy * std::cos(p.angle);
      return std::abs(d) <= p.a;
    }
  }
}

bool sprite_covers(const Sprite& s, double time, double x, double y) {
  auto pos = s.position(time);
  double dx = x - pos[0], dy = y - pos[1];
  double half = s.size * 0.5;
  if (s.kind == 0) return dx * dx + dy * dy <= half * half;
  return std::abs(dx) <= half && std::abs(dy) <= half;
}

std::array<float, 3> sample_canvas(const Image& canvas, double x, double y) {
  int k = canvas.width;
  double cx = std::clamp(x, 0.0, double(k) - 1.0001);
  double cy = std::clamp(y, 0.0, double(k) - 1.0001);
  int x0 = int(cx), y0 = int(cy);
  double fx = cx - x0, fy = cy - y0;
  std::array<float, 3> out;
  for (int c = 0; c < 3; ++c) {
    double a = canvas.at(y0, x0, c) * (1 - fx) + canvas.at(y0, x0 + 1, c) * fx;
    double b = canvas.at(y0 + 1, x0, c) * (1 - fx) + canvas.at(y0 + 1, x0 + 1, c) * fx;
    out[c] = float(a * (1 - fy) + b * fy);
  }
  return out;
}

double half_extent(const CameraPose& pose, double base_view) {
  return base_view / (2.0 * pose.zoom);
}

CameraPose draw_photo_pose(Rng& rng, const SynthParams& prm, double base_view, int canvas) {
  CameraPose p;
  double zlo = prm.photo_zoom_lo, zhi = prm.photo_zoom_hi;
  if (prm.minimal_overlap) {
    zlo = std::max(zlo, 1.1);
    zhi = std::max(zhi, zlo + 0.05);
  }
  p.zoom = std::exp(rng.uniform(std::log(zlo), std::log(zhi)));
  p.rot = rng.uniform(-prm.photo_rot_range, prm.photo_rot_range);
  double margin = half_extent(p, base_view) * std::numbers::sqrt2 + 2.0;
  p.cx = rng.uniform(margin, canvas - margin);
  p.cy = rng.uniform(margin, canvas - margin);
  return p;
}

Illumination draw_illum(Rng& rng, double glo, double ghi, double brange) {
  Illumination il;
  for (int c = 0; c < 3; ++c) {
    il.gain[c] = rng.uniform(glo, ghi);
    il.bias[c] = rng.uniform(-brange, brange);
  }
  return il;
}

double catmull_rom(double p0, double p1, double p2, double p3, double t) {
  double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

json pose_to_json(const CameraPose& p) {
  return json{{"cx", p.cx}, {"cy", p.cy}, {"rot", p.rot}, {"zoom", p.zoom}};
}

CameraPose pose_from_json(const json& j) {
  return CameraPose{j.at("cx").get<double>(), j.at("cy").get<double>(),
                    j.at("rot").get<double>(), j.at("zoom").get<double>()};
}

json illum_to_json(const Illumination& il) {
  return json{{"gain", il.gain}, {"bias", il.bias}};
}

Illumination illum_from_json(const json& j) {
  Illumination il;
  il.gain = j.at("gain").get<std::array<double, 3>>();
  il.bias = j.at("bias").get<std::array<double, 3>>();
  return il;
}

}  // namespace

Scene generate_scene(uint64_t seed, int canvas_size, int image_size) {
  MVDF_CHECK(canvas_size >= 64, "generate_scene: canvas too small");
  Scene scene;
  scene.spec.seed = seed;
  scene.spec.canvas_size = canvas_size;
  scene.spec.image_size = image_size;
  scene.spec.base_view = canvas_size / 4.0;

  Rng rng = Rng::derive(seed, 0x7363656e65ull);

  // Shared luminance octaves plus coarse per-channel tints.
  const int octave_sizes[5] = {4, 8, 16, 32, 64};
  const double octave_weights[5] = {1.0, 0.55, 0.3, 0.18, 0.1};
  std::vector<NoiseLattice> lum;
  for (int o = 0; o < 5; ++o) lum.push_back(NoiseLattice::make(octave_sizes[o], rng));
  std::array<NoiseLattice, 3> tint = {NoiseLattice::make(5, rng), NoiseLattice::make(5, rng),
                                      NoiseLattice::make(5, rng)};

  int n_prims = int(rng.uniform_int(6, 10));
  for (int i = 0; i < n_prims; ++i) {
    Primitive p;
    p.kind = int(rng.uniform_int(0, 2));
    p.x = rng.uniform(0.08 * canvas_size, 0.92 * canvas_size);
    p.y = rng.uniform(0.08 * canvas_size, 0.92 * canvas_size);
    if (p.kind == 0) {
      p.a = rng.uniform(18, 55);
    } else if (p.kind == 1) {
      p.a = rng.uniform(16, 50);
      p.b = rng.uniform(16, 50);
    } else {
      p.a = rng.uniform(8, 22);
      p.angle = rng.uniform(0, std::numbers::pi);
    }
    for (int c = 0; c < 3; ++c) p.color[c] = float(rng.uniform(0.1, 0.9));
    p.alpha = float(rng.uniform(0.45, 0.8));
    scene.spec.primitives.push_back(p);
  }

  int n_sprites = int(rng.uniform_int(2, 3));
  for (int i = 0; i < n_sprites; ++i) {
    Sprite s;
    s.kind = int(rng.uniform_int(0, 1));
    s.size = rng.uniform(14, 26);
    bool bright = rng.uniform() < 0.5;
    for (int c = 0; c < 3; ++c)
      s.color[c] = float(bright ? rng.uniform(0.75, 0.98) : rng.uniform(0.02, 0.25));
    double m = 40.0 + s.size;
    s.x0 = rng.uniform(m, canvas_size - m);
    s.y0 = rng.uniform(m, canvas_size - m);
    s.x1 = rng.uniform(m, canvas_size - m);
    s.y1 = rng.uniform(m, canvas_size - m);
    scene.spec.sprites.push_back(s);
  }

  double wsum = 0;
  for (double w : octave_weights) wsum += w;
  scene.canvas = Image(canvas_size, canvas_size);
  for (int y = 0; y < canvas_size; ++y) {
    double v = (y + 0.5) / canvas_size;
    for (int x = 0; x < canvas_size; ++x) {
      double u = (x + 0.5) / canvas_size;
      double base = 0;
      for (int o = 0; o < 5; ++o) base += octave_weights[o] * lum[o].sample(u, v);
      base /= wsum;
      for (int c = 0; c < 3; ++c) {
        double t = tint[c].sample(u, v) - 0.5;
        double val = 0.18 + 0.62 * base + 0.22 * t;
        for (const auto& p : scene.spec.primitives)
          if (primitive_covers(p, x + 0.5, y + 0.5))
            val = (1.0 - p.alpha) * val + p.alpha * p.color[c];
        scene.canvas.at(y, x, c) = float(std::clamp(val, 0.04, 0.96));
      }
    }
  }
  return scene;
}

ViewRender render_view(const Scene& scene, const CameraPose& pose, const Illumination& illum,
                       bool include_transients, double time) {
  MVDF_CHECK(pose.zoom > 0, "render_view: zoom must be positive");
  const int hw = scene.spec.image_size;
  const double base = scene.spec.base_view;
  const double scale = base / (hw * pose.zoom);
  const double ct = std::cos(pose.rot), st = std::sin(pose.rot);

  ViewRender out;
  out.image = Image(hw, hw);
  out.mask = Mask(hw, hw);
  for (int i = 0; i < hw; ++i) {
    double v = (i + 0.5 - hw / 2.0) * scale;
    for (int j = 0; j < hw; ++j) {
      double u = (j + 0.5 - hw / 2.0) * scale;
      double x = pose.cx + u * ct - v * st;
      double y = pose.cy + u * st + v * ct;
      std::array<float, 3> val{};
      bool transient = false;
      if (include_transients) {
        for (const auto& s : scene.spec.sprites) {
          if (sprite_covers(s, time, x, y)) {
            val = s.color;
            transient = true;
          }
        }
      }
      if (!transient) val = sample_canvas(scene.canvas, x, y);
      for (int c = 0; c < 3; ++c)
        out.image.at(i, j, c) = clamp01(float(illum.gain[c] * val[c] + illum.bias[c]));
      out.mask.at(i, j) = transient ? 255 : 0;
    }
  }
  return out;
}

CameraPose pose_lerp(const CameraPose& a, const CameraPose& b, double f) {
  CameraPose p;
  p.cx = a.cx + (b.cx - a.cx) * f;
  p.cy = a.cy + (b.cy - a.cy) * f;
  p.rot = a.rot + (b.rot - a.rot) * f;
  p.zoom = std::exp(std::log(a.zoom) + (std::log(b.zoom) - std::log(a.zoom)) * f);
  return p;
}

double pose_distance(const CameraPose& a, const CameraPose& b) {
  double dc = std::hypot(a.cx - b.cx, a.cy - b.cy);
  return dc + 60.0 * std::abs(a.rot - b.rot) + 120.0 * std::abs(std::log(a.zoom / b.zoom));
}

double viewport_iou(const CameraPose& a, const CameraPose& b, double base_view,
                    int canvas_size) {
  double reach = (half_extent(a, base_view) + half_extent(b, base_view)) * std::numbers::sqrt2;
  if (std::hypot(a.cx - b.cx, a.cy - b.cy) > reach) return 0.0;
  auto inside = [&](const CameraPose& p, double x, double y) {
    double dx = x - p.cx, dy = y - p.cy;
    double ct = std::cos(p.rot), st = std::sin(p.rot);
    double u = dx * ct + dy * st;
    double v = -dx * st + dy * ct;
    double half = half_extent(p, base_view);
    return std::abs(u) <= half && std::abs(v) <= half;
  };
  const int grid = 128;
  double step = double(canvas_size) / grid;
  int64_t inter = 0, uni = 0;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      double x = (j + 0.5) * step, y = (i + 0.5) * step;
      bool ia = inside(a, x, y), ib = inside(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

bool pose_valid(const CameraPose& pose, double base_view, int canvas_size) {
  double rad = half_extent(pose, base_view) * std::numbers::sqrt2 + 1.0;
  return pose.cx >= rad && pose.cy >= rad && pose.cx <= canvas_size - rad &&
         pose.cy <= canvas_size - rad;
}

std::vector<PhotoView> sample_photo_views(const Scene& scene, int count, Rng& rng,
                                          const SynthParams& prm) {
  MVDF_CHECK(count >= 1, "sample_photo_views: count must be >= 1");
  double min_dist = prm.minimal_overlap ? std::max(prm.photo_min_dist, 120.0) : prm.photo_min_dist;
  double max_iou = prm.minimal_overlap ? 0.0 : prm.photo_max_iou;

  const int canvas = scene.spec.canvas_size;
  const double base = scene.spec.base_view;
  std::vector<PhotoView> views;
  const int64_t max_attempts = 200000;
  int64_t attempts = 0;
  while (int(views.size()) < count) {
    MVDF_CHECK(attempts++ < max_attempts,
               "sample_photo_views: pose constraints unsatisfiable after " << max_attempts
                                                                           << " attempts");
    CameraPose p = draw_photo_pose(rng, prm, base, canvas);
    if (!pose_valid(p, base, canvas)) continue;
    bool ok = true;
    for (const auto& v : views) {
      if (pose_distance(p, v.pose) < min_dist ||
          viewport_iou(p, v.pose, base, canvas) > max_iou) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      // Restart occasionally so an unlucky early pick cannot wedge the set.
      if (attempts % 4000 == 0) views.clear();
      continue;
    }
    PhotoView pv;
    pv.pose = p;
    pv.illum = draw_illum(rng, prm.gain_lo, prm.gain_hi, prm.bias_range);
    pv.time = rng.uniform();
    views.push_back(pv);
  }
  return views;
}

VideoClip sample_video_clip(const Scene& scene, int length, Rng& rng, const SynthParams& prm) {
  MVDF_CHECK(length >= 2, "sample_video_clip: length must be >= 2");
  const int canvas = scene.spec.canvas_size;
  const double base = scene.spec.base_view;
  const int segments = std::max(1, (length - 1 + 15) / 16);
  const int m = segments + 3;

  // Control points in (cx, cy, rot, log zoom); bounded steps keep the path
  // smooth. Centers stay inside a region sized for the widest zoom plus
  // spline-overshoot headroom, so every emitted pose is valid.
  const double zoom_min = 0.85, zoom_max = 1.35;
  const double rad_max = base / (2.0 * zoom_min) * std::numbers::sqrt2 + 12.0;
  MVDF_CHECK(2 * rad_max < canvas, "sample_video_clip: canvas too small for the zoom range");
  auto clamp_center = [&](double v) { return std::clamp(v, rad_max, canvas - rad_max); };

  std::vector<std::array<double, 4>> ctrl(m);
  ctrl[0] = {rng.uniform(rad_max, canvas - rad_max), rng.uniform(rad_max, canvas - rad_max),
             rng.uniform(-0.25, 0.25), rng.uniform(std::log(0.9), std::log(1.25))};
  for (int i = 1; i < m; ++i) {
    auto prev = ctrl[i - 1];
    ctrl[i] = {clamp_center(prev[0] + rng.uniform(-prm.clip_center_step, prm.clip_center_step)),
               clamp_center(prev[1] + rng.uniform(-prm.clip_center_step, prm.clip_center_step)),
               std::clamp(prev[2] + rng.uniform(-prm.clip_rot_step, prm.clip_rot_step), -0.5, 0.5),
               std::clamp(prev[3] + rng.uniform(-prm.clip_logzoom_step, prm.clip_logzoom_step),
                          std::log(zoom_min), std::log(zoom_max))};
  }

  VideoClip clip;
  clip.illum = draw_illum(rng, prm.clip_gain_lo, prm.clip_gain_hi, 0.05);
  clip.poses.resize(length);
  for (int f = 0; f < length; ++f) {
    double g = double(f) * segments / double(length - 1);
    int seg = std::min(int(g), segments - 1);
    double t = g - seg;
    std::array<double, 4> q;
    for (int d = 0; d < 4; ++d)
      q[d] = catmull_rom(ctrl[seg][d], ctrl[seg + 1][d], ctrl[seg + 2][d], ctrl[seg + 3][d], t);
    CameraPose p{q[0], q[1], q[2], std::exp(q[3])};
    clip.poses[f] = p;
  }
  return clip;
}

void make_dataset(const std::string& dir, const DatasetParams& params) {
  MVDF_CHECK(params.scenes >= 1, "make_dataset: need at least one scene");
  MVDF_CHECK(params.photos_per_scene >= 1, "make_dataset: need at least one photo per scene");
  MVDF_CHECK(params.clip_len >= 2, "make_dataset: clip length must be >= 2");
  fs::create_directories(dir);

  SynthParams sp;
  sp.minimal_overlap = params.minimal_overlap;

  for (int s = 0; s < params.scenes; ++s) {
    uint64_t scene_seed = mix64(params.seed, 0x7363ull, uint64_t(s));
    Scene scene = generate_scene(scene_seed, 512, params.image_size);
    Rng prng = Rng::derive(params.seed, 0x70686f746full, uint64_t(s));
    Rng crng = Rng::derive(params.seed, 0x636c6970ull, uint64_t(s));
    auto photos = sample_photo_views(scene, params.photos_per_scene, prng, sp);
    auto clip = sample_video_clip(scene, params.clip_len, crng, sp);

    fs::path root = fs::path(dir) / ("scene_" + std::to_string(s));
    fs::create_directories(root / "photos");
    fs::create_directories(root / "clip");
    fs::create_directories(root / "truth");

    json jphotos = json::array();
    for (size_t j = 0; j < photos.size(); ++j) {
      ViewRender r = render_view(scene, photos[j].pose, photos[j].illum, true, photos[j].time);
      write_png((root / "photos" / (std::to_string(j) + ".png")).string(), r.image);
      write_mask_png((root / "photos" / (std::to_string(j) + ".mask.png")).string(), r.mask);
      json jp = pose_to_json(photos[j].pose);
      jp["illum"] = illum_to_json(photos[j].illum);
      jp["time"] = photos[j].time;
      jphotos.push_back(jp);
    }

    json jclip_poses = json::array();
    for (size_t f = 0; f < clip.poses.size(); ++f) {
      ViewRender r = render_view(scene, clip.poses[f], clip.illum, false);
      write_png((root / "clip" / (std::to_string(f) + ".png")).string(), r.image);
      jclip_poses.push_back(pose_to_json(clip.poses[f]));
    }

    json truth;
    truth["scene_seed"] = scene_seed;
    truth["canvas_size"] = 512;
    truth["image_size"] = params.image_size;
    truth["minimal_overlap"] = params.minimal_overlap;
    truth["photos"] = jphotos;
    truth["clip"] = {{"illum", illum_to_json(clip.illum)}, {"poses", jclip_poses}};
    std::ofstream out(root / "truth" / "poses.json");
    out << truth.dump(2) << "\n";
  }
}

SceneTruth load_scene_truth(const std::string& scene_dir) {
  std::ifstream in(fs::path(scene_dir) / "truth" / "poses.json");
  MVDF_CHECK(in.good(), "load_scene_truth: missing truth/poses.json under " << scene_dir);
  json truth = json::parse(in);

  SceneTruth st;
  st.scene = generate_scene(truth.at("scene_seed").get<uint64_t>(),
                            truth.at("canvas_size").get<int>(),
                            truth.at("image_size").get<int>());
  for (const auto& jp : truth.at("photos")) {
    PhotoView pv;
    pv.pose = pose_from_json(jp);
    pv.illum = illum_from_json(jp.at("illum"));
    pv.time = jp.at("time").get<double>();
    st.photos.push_back(pv);
  }
  st.clip.illum = illum_from_json(truth.at("clip").at("illum"));
  for (const auto& jp : truth.at("clip").at("poses")) st.clip.poses.push_back(pose_from_json(jp));
  return st;
}

std::vector<std::string> list_scene_dirs(const std::string& dataset_dir) {
  std::vector<std::pair<int, std::string>> found;
  for (const auto& e : fs::directory_iterator(dataset_dir)) {
    if (!e.is_directory()) continue;
    std::string name = e.path().filename().string();
    if (name.rfind("scene_", 0) == 0) {
      try {
        found.push_back({std::stoi(name.substr(6)), e.path().string()});
      } catch (const std::exception&) {
      }
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto& [id, path] : found) out.push_back(path);
  return out;
}

}  // namespace mvdf

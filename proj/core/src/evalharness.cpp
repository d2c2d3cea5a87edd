#include "mvdf/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace mvdf {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void check_same_shape(const Image& a, const Image& b, const char* who) {
  MVDF_CHECK(a.height == b.height && a.width == b.width,
             who << ": image shapes differ (" << a.width << "x" << a.height << " vs " << b.width
                 << "x" << b.height << ")");
}

// Shortest open path through all poses; ties resolved toward the
// lexicographically smallest index order so results never depend on the
// permutation enumeration order.
std::vector<int> order_by_path_length(const std::vector<CameraPose>& poses) {
  std::vector<int> idx(poses.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> perm = idx, best = idx;
  double best_len = -1;
  do {
    double len = 0;
    for (size_t i = 0; i + 1 < perm.size(); ++i)
      len += pose_distance(poses[perm[i]], poses[perm[i + 1]]);
    if (best_len < 0 || len < best_len - 1e-12) {
      best_len = len;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Image hstack(const std::vector<Image>& row) {
  MVDF_CHECK(!row.empty(), "hstack: empty row");
  int h = row[0].height, total = 0;
  for (const auto& img : row) total += img.width;
  Image out(h, total);
  int x0 = 0;
  for (const auto& img : row) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x0 + x, c) = img.at(y, x, c);
    x0 += img.width;
  }
  return out;
}

Image vstack(const std::vector<Image>& col) {
  MVDF_CHECK(!col.empty(), "vstack: empty column");
  int w = col[0].width, total = 0;
  for (const auto& img : col) total += img.height;
  Image out(total, w);
  int y0 = 0;
  for (const auto& img : col) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) out.at(y0 + y, x, c) = img.at(y, x, c);
    y0 += img.height;
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_same_shape(a, b, "psnr");
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    mse += double(a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  mse /= double(a.data.size());
  if (mse <= 0) return 99.0;
  return std::min(99.0, -10.0 * std::log10(mse));
}

double ssim(const Image& a, const Image& b) {
  check_same_shape(a, b, "ssim");
  constexpr int kWin = 8;
  MVDF_CHECK(a.height >= kWin && a.width >= kWin, "ssim: image smaller than the 8x8 window");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double inv_n = 1.0 / double(kWin * kWin);

  double acc = 0;
  int64_t windows = 0;
  for (int c = 0; c < 3; ++c)
    for (int y0 = 0; y0 + kWin <= a.height; ++y0)
      for (int x0 = 0; x0 + kWin <= a.width; ++x0) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int y = y0; y < y0 + kWin; ++y)
          for (int x = x0; x < x0 + kWin; ++x) {
            double va = a.at(y, x, c), vb = b.at(y, x, c);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        double ma = sa * inv_n, mb = sb * inv_n;
        double va = saa * inv_n - ma * ma;
        double vb = sbb * inv_n - mb * mb;
        double cov = sab * inv_n - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
  return acc / double(windows);
}

std::vector<Image> crossfade_baseline(const Image& a, const Image& b, int count) {
  check_same_shape(a, b, "crossfade_baseline");
  MVDF_CHECK(count >= 0, "crossfade_baseline: negative count");
  std::vector<Image> out;
  for (int i = 1; i <= count; ++i) {
    float t = float(i) / float(count + 1);
    Image img(a.height, a.width);
    for (size_t k = 0; k < img.data.size(); ++k)
      img.data[k] = (1.0f - t) * a.data[k] + t * b.data[k];
    out.push_back(std::move(img));
  }
  return out;
}

double appearance_drift(const std::vector<Image>& frames) {
  MVDF_CHECK(frames.size() >= 2, "appearance_drift: need at least 2 frames");
  double worst = 0;
  auto prev = channel_means(frames[0]);
  for (size_t f = 1; f < frames.size(); ++f) {
    auto cur = channel_means(frames[f]);
    double sq = 0;
    for (int c = 0; c < 3; ++c) sq += double(cur[c] - prev[c]) * (cur[c] - prev[c]);
    worst = std::max(worst, std::sqrt(sq / 3.0));
    prev = cur;
  }
  return worst;
}

EvalReport run_eval(Weights<float>& w, const std::string& dataset_dir, const EvalConfig& cfg) {
  MVDF_CHECK(cfg.min_keyframes >= 2 && cfg.max_keyframes <= 5 &&
                 cfg.min_keyframes <= cfg.max_keyframes,
             "run_eval: keyframe arity range must sit inside [2, 5]");
  MVDF_CHECK(cfg.sets_per_pair >= 1, "run_eval: need at least one set per pair");

  auto dirs = list_scene_dirs(dataset_dir);
  MVDF_CHECK(!dirs.empty(), "run_eval: no scenes under " << dataset_dir);
  if (!cfg.strips_dir.empty()) fs::create_directories(cfg.strips_dir);

  EvalReport rep;
  rep.weights_hash = weights_digest(w);

  for (size_t si = 0; si < dirs.size(); ++si) {
    SceneTruth truth = load_scene_truth(dirs[si]);
    // Photos as the model sees them: quantized PNG content plus stored masks.
    std::vector<Image> photos;
    std::vector<Mask> masks;
    for (size_t j = 0;; ++j) {
      fs::path img = fs::path(dirs[si]) / "photos" / (std::to_string(j) + ".png");
      if (!fs::exists(img)) break;
      photos.push_back(read_png(img.string()));
      masks.push_back(
          read_mask_png((fs::path(dirs[si]) / "photos" / (std::to_string(j) + ".mask.png"))
                            .string()));
    }
    MVDF_CHECK(photos.size() == truth.photos.size(),
               "run_eval: photo files and stored poses disagree under " << dirs[si]);

    int max_n = std::min<int>(cfg.max_keyframes, int(photos.size()));
    for (int n = cfg.min_keyframes; n <= max_n; ++n) {
      for (int set = 0; set < cfg.sets_per_pair; ++set) {
        Rng rng = Rng::derive(cfg.seed, mix64(uint64_t(si), uint64_t(n)), uint64_t(set));
        std::vector<int> all(photos.size());
        std::iota(all.begin(), all.end(), 0);
        rng.shuffle(all);
        std::vector<int> pick(all.begin(), all.begin() + n);
        std::sort(pick.begin(), pick.end());

        std::vector<CameraPose> poses;
        for (int j : pick) poses.push_back(truth.photos[j].pose);
        std::vector<int> order = order_by_path_length(poses);

        GenerationRequest req;
        req.steps = cfg.steps;
        req.seed = mix64(cfg.seed, mix64(uint64_t(si), uint64_t(n)), 0x65766121ull + set);
        req.use_appearance = cfg.use_appearance;
        std::vector<CameraPose> path;
        for (int o : order) {
          req.keyframes.push_back(photos[pick[o]]);
          if (cfg.use_masks) req.masks.push_back(masks[pick[o]]);
          path.push_back(truth.photos[pick[o]].pose);
        }
        const Illumination& illum = truth.photos[pick[order[0]]].illum;

        // Ground truth: pose-interpolated renders under the first keyframe's
        // illumination, without transients.
        std::vector<Image> gt;
        for (int a = 0; a + 1 < n; ++a)
          for (int i = 1; i <= 15; ++i) {
            CameraPose p = pose_lerp(path[a], path[a + 1], double(i) / 16.0);
            gt.push_back(render_view(truth.scene, p, illum, false).image);
          }

        GenerationResult gen = generate(w, req);
        MVDF_CHECK(gen.frames.size() == gt.size(), "run_eval: frame count mismatch");

        std::vector<Image> base;
        for (int a = 0; a + 1 < n; ++a) {
          auto fade = crossfade_baseline(req.keyframes[a], req.keyframes[a + 1], 15);
          base.insert(base.end(), fade.begin(), fade.end());
        }

        EvalRow row;
        row.scene = int(si);
        row.n = n;
        row.set_index = set;
        for (size_t i = 0; i < gt.size(); ++i) {
          row.psnr_model += psnr(gen.frames[i], gt[i]);
          row.psnr_base += psnr(base[i], gt[i]);
          row.ssim_model += ssim(gen.frames[i], gt[i]);
          row.ssim_base += ssim(base[i], gt[i]);
        }
        row.psnr_model /= double(gt.size());
        row.psnr_base /= double(gt.size());
        row.ssim_model /= double(gt.size());
        row.ssim_base /= double(gt.size());
        row.drift_model = appearance_drift(full_strip(req.keyframes, gen.frames));
        row.drift_base = appearance_drift(full_strip(req.keyframes, base));
        rep.rows.push_back(row);

        if (!cfg.strips_dir.empty()) {
          char name[64];
          std::snprintf(name, sizeof(name), "scene%02d_n%d_set%d.png", int(si), n, set);
          write_png((fs::path(cfg.strips_dir) / name).string(),
                    vstack({hstack(gt), hstack(gen.frames), hstack(base)}));
        }
      }
    }
  }

  MVDF_CHECK(!rep.rows.empty(), "run_eval: nothing evaluated (too few photos per scene?)");
  for (const auto& r : rep.rows) {
    rep.mean_psnr_model += r.psnr_model;
    rep.mean_psnr_base += r.psnr_base;
    rep.mean_ssim_model += r.ssim_model;
    rep.mean_ssim_base += r.ssim_base;
    rep.mean_drift_model += r.drift_model;
    rep.mean_drift_base += r.drift_base;
  }
  double k = double(rep.rows.size());
  rep.mean_psnr_model /= k;
  rep.mean_psnr_base /= k;
  rep.mean_ssim_model /= k;
  rep.mean_ssim_base /= k;
  rep.mean_drift_model /= k;
  rep.mean_drift_base /= k;
  return rep;
}

void write_report_json(const EvalReport& rep, const EvalConfig& cfg, const std::string& path) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"scene", r.scene},
                    {"n", r.n},
                    {"set", r.set_index},
                    {"psnr_model", r.psnr_model},
                    {"psnr_baseline", r.psnr_base},
                    {"ssim_model", r.ssim_model},
                    {"ssim_baseline", r.ssim_base},
                    {"drift_model", r.drift_model},
                    {"drift_baseline", r.drift_base}});
  }
  json doc;
  doc["rows"] = rows;
  doc["aggregates"] = {{"psnr_model", rep.mean_psnr_model},
                       {"psnr_baseline", rep.mean_psnr_base},
                       {"ssim_model", rep.mean_ssim_model},
                       {"ssim_baseline", rep.mean_ssim_base},
                       {"drift_model", rep.mean_drift_model},
                       {"drift_baseline", rep.mean_drift_base}};
  doc["protocol"] = {{"sets_per_pair", cfg.sets_per_pair},
                     {"min_keyframes", cfg.min_keyframes},
                     {"max_keyframes", cfg.max_keyframes},
                     {"steps", cfg.steps},
                     {"seed", cfg.seed},
                     {"use_appearance", cfg.use_appearance},
                     {"use_masks", cfg.use_masks}};
  doc["weights_hash"] = hash_hex(rep.weights_hash);
  std::ofstream out(path);
  MVDF_CHECK(out.good(), "write_report_json: cannot open " << path);
  out << doc.dump(2) << "\n";
}

}  // namespace mvdf

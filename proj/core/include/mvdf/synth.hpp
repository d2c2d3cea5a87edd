#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mvdf/image.hpp"
#include "mvdf/rng.hpp"

namespace mvdf {

// 2D similarity-transform camera over the scene canvas. zoom > 1 magnifies:
// the viewport half-extent in canvas units is base_view / (2 * zoom).
struct CameraPose {
  double cx = 0.0;
  double cy = 0.0;
  double rot = 0.0;   // radians
  double zoom = 1.0;  // > 0
};

// Per-channel affine lighting applied after sampling; output clamped to [0,1].
struct Illumination {
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> bias{0.0, 0.0, 0.0};
};

struct Primitive {
  int kind = 0;  // 0 disc, 1 axis-aligned rectangle, 2 rotated stripe
  double x = 0, y = 0;
  double a = 0, b = 0;  // radius / half-extents / half-width
  double angle = 0;
  std::array<float, 3> color{0, 0, 0};
  float alpha = 0.7f;
};

// Transient mover: linear trajectory between two interior points, rendered
// only into photo-style views. time parametrizes the trajectory in [0, 1].
struct Sprite {
  int kind = 0;  // 0 disc, 1 square
  double size = 16;
  std::array<float, 3> color{0, 0, 0};
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  std::array<double, 2> position(double time) const {
    return {x0 + (x1 - x0) * time, y0 + (y1 - y0) * time};
  }
};

struct SceneSpec {
  uint64_t seed = 0;
  int canvas_size = 512;
  int image_size = 32;
  double base_view = 128.0;  // viewport extent in canvas units at zoom 1
  std::vector<Primitive> primitives;
  std::vector<Sprite> sprites;
};

struct Scene {
  SceneSpec spec;
  Image canvas;  // static content only; sprites composited at render time
};

struct ViewRender {
  Image image;
  Mask mask;  // 255 exactly where a sprite determined the pixel color
};

struct PhotoView {
  CameraPose pose;
  Illumination illum;
  double time = 0.0;  // sprite trajectory parameter
};

struct VideoClip {
  std::vector<CameraPose> poses;
  Illumination illum;  // constant across the clip
};

// Sampling ranges for cameras and lighting. minimal_overlap widens pose
// spacing until viewports are disjoint.
struct SynthParams {
  double photo_min_dist = 70.0;
  double photo_max_iou = 0.30;
  double photo_rot_range = 0.5;
  double photo_zoom_lo = 0.75;
  double photo_zoom_hi = 1.40;
  double gain_lo = 0.65;
  double gain_hi = 1.35;
  double bias_range = 0.12;
  double clip_rot_step = 0.10;
  double clip_center_step = 34.0;
  double clip_logzoom_step = 0.06;
  double clip_gain_lo = 0.80;
  double clip_gain_hi = 1.20;
  bool minimal_overlap = false;
};

// Deterministic in the seed: canvas from multi-octave value noise plus
// geometric primitives, plus 2-3 sprite trajectories kept inside the canvas.
Scene generate_scene(uint64_t seed, int canvas_size = 512, int image_size = 32);

// Bilinear canvas sampling under the pose, sprites composited when requested,
// illumination applied last. The mask marks sprite-covered pixels exactly.
ViewRender render_view(const Scene& scene, const CameraPose& pose, const Illumination& illum,
                       bool include_transients, double time = 0.0);

// Wide-baseline photo surrogates: rejection sampling enforces the minimum
// pairwise pose distance and the viewport overlap cap; each view draws its
// own illumination and sprite time. Throws if constraints cannot be met.
std::vector<PhotoView> sample_photo_views(const Scene& scene, int count, Rng& rng,
                                          const SynthParams& params = {});

// Smooth camera path: Catmull-Rom spline through bounded-step control points
// in (cx, cy, rot, log zoom) space, sampled at `length` frames. C1 continuous.
// Illumination is drawn once and held constant.
VideoClip sample_video_clip(const Scene& scene, int length, Rng& rng,
                            const SynthParams& params = {});

// Pose interpolation used for ground-truth paths: linear in center and
// rotation, geometric in zoom. f in [0, 1].
CameraPose pose_lerp(const CameraPose& a, const CameraPose& b, double f);

// Weighted pose-space metric (canvas pixels, rotation and log-zoom scaled to
// comparable units).
double pose_distance(const CameraPose& a, const CameraPose& b);

// Approximate viewport intersection-over-union via coverage rasterization.
double viewport_iou(const CameraPose& a, const CameraPose& b, double base_view,
                    int canvas_size);

bool pose_valid(const CameraPose& pose, double base_view, int canvas_size);

// On-disk dataset tree:
//   DIR/scene_<id>/photos/<j>.png          photo views (transients rendered)
//   DIR/scene_<id>/photos/<j>.mask.png     transient masks
//   DIR/scene_<id>/clip/<f>.png            video clip frames
//   DIR/scene_<id>/truth/poses.json        everything needed to re-render
struct DatasetParams {
  int scenes = 8;
  int photos_per_scene = 6;
  int clip_len = 65;
  uint64_t seed = 0;
  int image_size = 32;
  bool minimal_overlap = false;
};

void make_dataset(const std::string& dir, const DatasetParams& params);

// Parsed truth/poses.json plus the scene rebuilt from its stored seed.
struct SceneTruth {
  Scene scene;
  std::vector<PhotoView> photos;
  VideoClip clip;
};

SceneTruth load_scene_truth(const std::string& scene_dir);
std::vector<std::string> list_scene_dirs(const std::string& dataset_dir);

}  // namespace mvdf

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvdf/checkpoint.hpp"
#include "mvdf/evalharness.hpp"
#include "mvdf/infer.hpp"
#include "mvdf/synth.hpp"
#include "mvdf/tasks.hpp"

namespace fs = std::filesystem;
using namespace mvdf;

namespace {

std::string frame_name(int index_1based) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.png", index_1based);
  return buf;
}

std::string step_name(int64_t step) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "checkpoint_%06lld.ckpt", (long long)step);
  return buf;
}

int cmd_make_data(const std::string& out, const DatasetParams& dp) {
  make_dataset(out, dp);
  std::cout << "wrote " << dp.scenes << " scenes under " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out,
              const std::string& resume, double task_mix, int baseline_mult, int steps, int batch,
              int threads, int save_every) {
  MVDF_CHECK(config_path.empty() != resume.empty(),
             "train: pass exactly one of --config or --resume");

  RunConfig rc;
  Checkpoint start;
  if (!resume.empty()) {
    start = load_checkpoint(resume);
    MVDF_CHECK(start.has_opt, "train: " << resume << " carries no optimizer state to resume from");
    rc = start.config;
  } else {
    rc = load_run_config(config_path);
  }
  if (task_mix >= 0) rc.train.task.task_mix = task_mix;
  if (baseline_mult > 0) rc.train.task.baseline_multiplier = baseline_mult;
  if (steps > 0) rc.train.steps = steps;
  if (batch > 0) rc.train.batch = batch;
  if (threads > 0) rc.train.threads = threads;

  std::vector<SceneData> scenes = load_training_scenes(data);
  std::cout << "training on " << scenes.size() << " scenes from " << data << "\n";

  Trainer trainer(rc.model, rc.train);
  trainer.attach_data(std::move(scenes));
  if (!resume.empty()) {
    trainer.weights = start.weights;
    trainer.opt = start.opt;
    trainer.step = start.step;
    std::cout << "resumed from " << resume << " at step " << start.step << "\n";
  }

  fs::create_directories(out);
  auto snapshot = [&]() {
    Checkpoint ck;
    ck.config = rc;
    ck.step = trainer.step;
    ck.weights = trainer.weights;
    ck.opt = trainer.opt;
    ck.has_opt = true;
    std::string path = out + "/" + step_name(trainer.step);
    save_checkpoint(path, ck);
    return path;
  };

  std::ofstream loss_csv(out + "/loss.csv", trainer.step > 0 ? std::ios::app : std::ios::trunc);
  MVDF_CHECK(loss_csv.good(), "train: cannot write to " << out);
  if (trainer.step == 0) loss_csv << "step,loss\n";

  while (trainer.step < rc.train.steps) {
    float loss = trainer.train_step();
    loss_csv << trainer.step << "," << loss << "\n";
    if (save_every > 0 && trainer.step % save_every == 0 && trainer.step < rc.train.steps)
      std::cout << "step " << trainer.step << " loss " << loss << " -> " << snapshot() << "\n";
  }
  loss_csv.flush();
  std::cout << "finished at step " << trainer.step << " -> " << snapshot() << "\n";
  return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::vector<std::string>& keyframes,
                 const std::vector<std::string>& masks, const std::string& appearance, int steps,
                 uint64_t seed, const std::string& out) {
  MVDF_CHECK(masks.empty() || masks.size() == keyframes.size(),
             "generate: --masks must list one file per keyframe");
  Checkpoint ck = load_checkpoint(ckpt_path);

  GenerationRequest req;
  for (const auto& p : keyframes) req.keyframes.push_back(read_png(p));
  for (const auto& p : masks) req.masks.push_back(read_mask_png(p));
  if (!appearance.empty()) req.appearance_source = read_png(appearance);
  req.steps = steps;
  req.seed = seed;
  req.schedule = ck.config.train.schedule;
  req.diffusion_steps = ck.config.train.diffusion_steps;

  GenerationResult res = generate_chained(ck.weights, req);

  fs::create_directories(out);
  for (size_t i = 0; i < res.frames.size(); ++i)
    write_png(out + "/" + frame_name(int(i) + 1), res.frames[i]);

  nlohmann::json prov;
  prov["request_hash"] = hash_hex(res.request_hash);
  prov["checkpoint_hash"] = hash_hex(res.weights_hash);
  prov["checkpoint"] = ckpt_path;
  prov["seed"] = seed;
  prov["steps"] = steps;
  prov["keyframes"] = keyframes;
  prov["frames"] = res.frames.size();
  std::ofstream pj(out + "/provenance.json");
  pj << prov.dump(2) << "\n";

  std::cout << "wrote " << res.frames.size() << " frames to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data, const std::string& report,
             EvalConfig ec) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  EvalReport rep = run_eval(ck.weights, data, ec);
  if (fs::path(report).has_parent_path()) fs::create_directories(fs::path(report).parent_path());
  write_report_json(rep, ec, report);
  std::cout << "evaluated " << rep.rows.size() << " keyframe sets\n";
  std::cout << "  psnr  model " << rep.mean_psnr_model << "  crossfade " << rep.mean_psnr_base
            << "\n";
  std::cout << "  ssim  model " << rep.mean_ssim_model << "  crossfade " << rep.mean_ssim_base
            << "\n";
  std::cout << "  drift model " << rep.mean_drift_model << "  crossfade " << rep.mean_drift_base
            << "\n";
  std::cout << "report -> " << report << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keyframe-conditioned video model: data synthesis, training, sampling, evaluation"};
  app.require_subcommand(1);

  auto* mk = app.add_subcommand("make-data", "Render synthetic scenes into a dataset directory");
  std::string mk_out;
  DatasetParams dp;
  mk->add_option("--out", mk_out, "Output dataset directory")->required();
  mk->add_option("--scenes", dp.scenes, "Scene count");
  mk->add_option("--photos-per-scene", dp.photos_per_scene, "Unposed photos per scene");
  mk->add_option("--clip-len", dp.clip_len, "Video clip length in frames");
  mk->add_option("--seed", dp.seed, "Dataset seed");
  mk->add_option("--image-size", dp.image_size, "Rendered image side in pixels");
  mk->add_flag("--minimal-overlap", dp.minimal_overlap,
               "Force disjoint photo viewports (wide-baseline regime)");

  auto* tr = app.add_subcommand("train", "Train from a config file or resume from a checkpoint");
  std::string tr_config, tr_data, tr_out, tr_resume;
  double tr_task_mix = -1;
  int tr_baseline_mult = 0, tr_steps = 0, tr_batch = 0, tr_threads = 0, tr_save_every = 500;
  tr->add_option("--config", tr_config, "Run config JSON");
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--out", tr_out, "Output directory for checkpoints and the loss log")->required();
  tr->add_option("--resume", tr_resume, "Checkpoint to continue from (instead of --config)");
  tr->add_option("--task-mix", tr_task_mix, "Override inpainting share, 0 trains video-only");
  tr->add_option("--baseline-mult", tr_baseline_mult,
                 "Override keyframe stride multiplier (wider-baseline training)");
  tr->add_option("--steps", tr_steps, "Override total optimizer steps");
  tr->add_option("--batch", tr_batch, "Override samples per optimizer step");
  tr->add_option("--threads", tr_threads, "Override worker threads per step");
  tr->add_option("--save-every", tr_save_every, "Checkpoint interval in steps, 0 saves only at the end");

  auto* gen = app.add_subcommand("generate", "Interpolate between keyframe images");
  std::string g_ckpt, g_appearance, g_out;
  std::vector<std::string> g_keyframes, g_masks;
  int g_steps = 50;
  uint64_t g_seed = 0;
  gen->add_option("--checkpoint", g_ckpt, "Model checkpoint")->required();
  gen->add_option("--keyframes", g_keyframes, "Comma-separated keyframe PNGs, in order")
      ->required()
      ->delimiter(',');
  gen->add_option("--masks", g_masks, "Comma-separated transient mask PNGs, one per keyframe")
      ->delimiter(',');
  gen->add_option("--appearance", g_appearance,
                  "Image whose appearance conditions the generated frames (default: first keyframe)");
  gen->add_option("--steps", g_steps, "Sampler steps");
  gen->add_option("--seed", g_seed, "Noise seed");
  gen->add_option("--out", g_out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Score a checkpoint against dataset ground truth");
  std::string e_ckpt, e_data, e_report;
  EvalConfig ec;
  ev->add_option("--checkpoint", e_ckpt, "Model checkpoint")->required();
  ev->add_option("--data", e_data, "Dataset directory")->required();
  ev->add_option("--report", e_report, "Report JSON path")->required();
  ev->add_option("--strips", ec.strips_dir, "Directory for side-by-side image strips");
  ev->add_option("--sets-per-pair", ec.sets_per_pair, "Keyframe subsets per (scene, count)");
  ev->add_option("--min-keyframes", ec.min_keyframes, "Smallest keyframe count");
  ev->add_option("--max-keyframes", ec.max_keyframes, "Largest keyframe count");
  ev->add_option("--steps", ec.steps, "Sampler steps");
  ev->add_option("--seed", ec.seed, "Subset sampling seed");
  bool e_no_appearance = false, e_no_masks = false;
  ev->add_flag("--no-appearance", e_no_appearance, "Disable the appearance pathway");
  ev->add_flag("--no-masks", e_no_masks, "Ignore transient masks on keyframes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mk->parsed()) return cmd_make_data(mk_out, dp);
    if (tr->parsed())
      return cmd_train(tr_config, tr_data, tr_out, tr_resume, tr_task_mix, tr_baseline_mult,
                       tr_steps, tr_batch, tr_threads, tr_save_every);
    if (gen->parsed()) return cmd_generate(g_ckpt, g_keyframes, g_masks, g_appearance, g_steps,
                                           g_seed, g_out);
    if (ev->parsed()) {
      ec.use_appearance = !e_no_appearance;
      ec.use_masks = !e_no_masks;
      return cmd_eval(e_ckpt, e_data, e_report, ec);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

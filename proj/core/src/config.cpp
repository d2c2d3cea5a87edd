#include "mvdf/config.hpp"

#include <fstream>
#include <set>

namespace mvdf {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const char* where, std::set<std::string> allowed) {
  MVDF_CHECK(obj.is_object(), where << " must be a JSON object");
  for (const auto& [key, value] : obj.items())
    MVDF_CHECK(allowed.count(key), where << ": unknown key \"" << key << "\"");
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

nlohmann::json run_config_to_json(const RunConfig& rc) {
  json model = {{"width", rc.model.width},
                {"depth", rc.model.depth},
                {"heads", rc.model.heads},
                {"patch_size", rc.model.patch_size},
                {"image_h", rc.model.image_h},
                {"image_w", rc.model.image_w},
                {"appearance_dim", rc.model.appearance_dim},
                {"max_frames", rc.model.max_frames}};
  json task = {{"task_mix", rc.train.task.task_mix},
               {"mask_ratio", rc.train.task.mask_ratio},
               {"jitter_strength", rc.train.task.jitter_strength},
               {"cond_mask_prob", rc.train.task.cond_mask_prob},
               {"cond_mask_region", rc.train.task.cond_mask_region},
               {"baseline_multiplier", rc.train.task.baseline_multiplier}};
  json train = {{"steps", rc.train.steps},
                {"batch", rc.train.batch},
                {"threads", rc.train.threads},
                {"lr", rc.train.lr},
                {"weight_decay", rc.train.weight_decay},
                {"beta1", rc.train.beta1},
                {"beta2", rc.train.beta2},
                {"adam_eps", rc.train.adam_eps},
                {"grad_clip", rc.train.grad_clip},
                {"seed", rc.train.seed},
                {"schedule", to_string(rc.train.schedule)},
                {"diffusion_steps", rc.train.diffusion_steps},
                {"task", task}};
  return json{{"model", model}, {"train", train}};
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  reject_unknown(doc, "config", {"model", "train"});
  RunConfig rc;

  if (doc.contains("model")) {
    const json& m = doc.at("model");
    reject_unknown(m, "config.model",
                   {"width", "depth", "heads", "patch_size", "image_h", "image_w",
                    "appearance_dim", "max_frames"});
    read_field(m, "width", rc.model.width);
    read_field(m, "depth", rc.model.depth);
    read_field(m, "heads", rc.model.heads);
    read_field(m, "patch_size", rc.model.patch_size);
    read_field(m, "image_h", rc.model.image_h);
    read_field(m, "image_w", rc.model.image_w);
    read_field(m, "appearance_dim", rc.model.appearance_dim);
    read_field(m, "max_frames", rc.model.max_frames);
  }

  if (doc.contains("train")) {
    const json& t = doc.at("train");
    reject_unknown(t, "config.train",
                   {"steps", "batch", "threads", "lr", "weight_decay", "beta1", "beta2",
                    "adam_eps", "grad_clip", "seed", "schedule", "diffusion_steps", "task"});
    read_field(t, "steps", rc.train.steps);
    read_field(t, "batch", rc.train.batch);
    read_field(t, "threads", rc.train.threads);
    read_field(t, "lr", rc.train.lr);
    read_field(t, "weight_decay", rc.train.weight_decay);
    read_field(t, "beta1", rc.train.beta1);
    read_field(t, "beta2", rc.train.beta2);
    read_field(t, "adam_eps", rc.train.adam_eps);
    read_field(t, "grad_clip", rc.train.grad_clip);
    read_field(t, "seed", rc.train.seed);
    if (t.contains("schedule"))
      rc.train.schedule = schedule_kind_from_string(t.at("schedule").get<std::string>());
    read_field(t, "diffusion_steps", rc.train.diffusion_steps);
    if (t.contains("task")) {
      const json& k = t.at("task");
      reject_unknown(k, "config.train.task",
                     {"task_mix", "mask_ratio", "jitter_strength", "cond_mask_prob",
                      "cond_mask_region", "baseline_multiplier"});
      read_field(k, "task_mix", rc.train.task.task_mix);
      read_field(k, "mask_ratio", rc.train.task.mask_ratio);
      read_field(k, "jitter_strength", rc.train.task.jitter_strength);
      read_field(k, "cond_mask_prob", rc.train.task.cond_mask_prob);
      read_field(k, "cond_mask_region", rc.train.task.cond_mask_region);
      read_field(k, "baseline_multiplier", rc.train.task.baseline_multiplier);
    }
  }
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  MVDF_CHECK(in.good(), "load_run_config: cannot open " << path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("load_run_config: ") + e.what());
  }
  return run_config_from_json(doc);
}

void save_run_config(const RunConfig& rc, const std::string& path) {
  std::ofstream out(path);
  MVDF_CHECK(out.good(), "save_run_config: cannot open " << path);
  out << run_config_to_json(rc).dump(2) << "\n";
}

bool operator==(const TaskParams& a, const TaskParams& b) {
  return a.task_mix == b.task_mix && a.mask_ratio == b.mask_ratio &&
         a.jitter_strength == b.jitter_strength && a.cond_mask_prob == b.cond_mask_prob &&
         a.cond_mask_region == b.cond_mask_region &&
         a.baseline_multiplier == b.baseline_multiplier;
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  return a.steps == b.steps && a.batch == b.batch && a.threads == b.threads && a.lr == b.lr &&
         a.weight_decay == b.weight_decay &&
         a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.adam_eps == b.adam_eps &&
         a.grad_clip == b.grad_clip && a.seed == b.seed && a.schedule == b.schedule &&
         a.diffusion_steps == b.diffusion_steps && a.task == b.task;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.width == b.width && a.depth == b.depth && a.heads == b.heads &&
         a.patch_size == b.patch_size && a.image_h == b.image_h && a.image_w == b.image_w &&
         a.appearance_dim == b.appearance_dim && a.max_frames == b.max_frames;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.model == b.model && a.train == b.train;
}

}  // namespace mvdf

#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <vector>

#include "mvdf/checkpoint.hpp"
#include "mvdf/synth.hpp"
#include "mvdf/tasks.hpp"
#include "test_helpers.hpp"

using namespace mvdf;

namespace {

RunConfig tiny_run_config() {
  RunConfig rc;
  rc.model.width = 32;
  rc.model.depth = 1;
  rc.model.heads = 4;
  rc.model.patch_size = 8;
  rc.model.image_h = rc.model.image_w = 32;
  rc.model.appearance_dim = 8;
  rc.model.max_frames = 33;
  rc.train.steps = 7;
  rc.train.lr = 3e-4;
  rc.train.seed = 21;
  rc.train.schedule = ScheduleKind::cosine;
  rc.train.diffusion_steps = 40;
  rc.train.task.task_mix = 0.4;
  rc.train.task.baseline_multiplier = 2;
  return rc;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

bool exact_eq(const Matf& a, const Matf& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

}  // namespace

TEST_CASE("run config round trips through json with every field preserved") {
  RunConfig rc = tiny_run_config();
  testutil::TempDir tmp("config_roundtrip");
  std::string path = tmp.str() + "/run.json";
  save_run_config(rc, path);
  RunConfig back = load_run_config(path);
  CHECK(back == rc);

  // Defaults fill in anything the file leaves out.
  RunConfig sparse = run_config_from_json(nlohmann::json{{"model", {{"depth", 3}}}});
  CHECK(sparse.model.depth == 3);
  CHECK(sparse.model.width == ModelConfig{}.width);
  CHECK(sparse.train.lr == TrainConfig{}.lr);
}

TEST_CASE("run config parsing rejects unknown keys at every nesting level") {
  nlohmann::json good = run_config_to_json(tiny_run_config());
  CHECK_NOTHROW(run_config_from_json(good));

  auto with = [&](std::vector<std::string> path, const char* key) {
    nlohmann::json doc = good;
    nlohmann::json* at = &doc;
    for (const auto& p : path) at = &(*at)[p];
    (*at)[key] = 1;
    return doc;
  };
  CHECK_THROWS_AS(run_config_from_json(with({}, "modle")), std::invalid_argument);
  CHECK_THROWS_AS(run_config_from_json(with({"model"}, "widht")), std::invalid_argument);
  CHECK_THROWS_AS(run_config_from_json(with({"train"}, "learning_rate")), std::invalid_argument);
  CHECK_THROWS_AS(run_config_from_json(with({"train", "task"}, "mix")), std::invalid_argument);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json::array()), std::invalid_argument);
}

TEST_CASE("schedule names parse both ways and bad names are rejected") {
  nlohmann::json doc = run_config_to_json(tiny_run_config());
  CHECK(doc["train"]["schedule"] == "cosine");
  doc["train"]["schedule"] = "linear";
  CHECK(run_config_from_json(doc).train.schedule == ScheduleKind::linear);
  doc["train"]["schedule"] = "quadratic";
  CHECK_THROWS_AS(run_config_from_json(doc), std::invalid_argument);
}

TEST_CASE("checkpoint save load save is byte identical") {
  RunConfig rc = tiny_run_config();
  Checkpoint ck;
  ck.config = rc;
  ck.step = 123;
  ck.weights = init_weights<float>(rc.model, 77);
  ck.opt = make_adam_state(ck.weights);
  ck.opt.t = 123;
  Rng rng(5);
  for (auto& m : ck.opt.m)
    for (Eigen::Index i = 0; i < m.size(); ++i) *(m.data() + i) = float(rng.normal()) * 0.01f;
  for (auto& v : ck.opt.v)
    for (Eigen::Index i = 0; i < v.size(); ++i) *(v.data() + i) = float(rng.uniform()) * 0.001f;
  ck.has_opt = true;

  testutil::TempDir tmp("ckpt_bytes");
  std::string p1 = tmp.str() + "/a.ckpt", p2 = tmp.str() + "/b.ckpt";
  save_checkpoint(p1, ck);

  Checkpoint back = load_checkpoint(p1);
  CHECK(back.config == rc);
  CHECK(back.step == 123);
  CHECK(back.has_opt);
  CHECK(back.opt.t == 123);
  bool weights_equal = true;
  std::vector<Matf*> orig;
  ck.weights.visit([&](const std::string&, Matf& m) { orig.push_back(&m); });
  size_t idx = 0;
  back.weights.visit([&](const std::string&, Matf& m) {
    if (!exact_eq(m, *orig[idx++])) weights_equal = false;
  });
  CHECK(weights_equal);
  CHECK(back.opt.m.size() == ck.opt.m.size());
  for (size_t i = 0; i < ck.opt.m.size(); ++i) {
    CHECK(exact_eq(back.opt.m[i], ck.opt.m[i]));
    CHECK(exact_eq(back.opt.v[i], ck.opt.v[i]));
  }

  save_checkpoint(p2, back);
  CHECK(slurp(p1) == slurp(p2));

  // Without optimizer state the file shrinks to roughly a third.
  Checkpoint lean = ck;
  lean.has_opt = false;
  lean.opt = AdamState{};
  std::string p3 = tmp.str() + "/c.ckpt";
  save_checkpoint(p3, lean);
  CHECK(slurp(p3).size() < slurp(p1).size() / 2);
  CHECK_FALSE(load_checkpoint(p3).has_opt);
}

TEST_CASE("checkpoint loader rejects damaged files") {
  RunConfig rc = tiny_run_config();
  Checkpoint ck;
  ck.config = rc;
  ck.weights = init_weights<float>(rc.model, 3);

  testutil::TempDir tmp("ckpt_damage");
  std::string good = tmp.str() + "/good.ckpt";
  save_checkpoint(good, ck);
  std::vector<char> bytes = slurp(good);
  std::string bad = tmp.str() + "/bad.ckpt";

  SUBCASE("wrong magic") {
    bytes[0] = 'X';
    spit(bad, bytes);
    CHECK_THROWS_AS(load_checkpoint(bad), std::invalid_argument);
  }
  SUBCASE("unknown version") {
    bytes[4] = 9;
    spit(bad, bytes);
    CHECK_THROWS_AS(load_checkpoint(bad), std::invalid_argument);
  }
  SUBCASE("truncated") {
    bytes.resize(bytes.size() - 17);
    spit(bad, bytes);
    CHECK_THROWS_AS(load_checkpoint(bad), std::invalid_argument);
  }
  SUBCASE("trailing garbage") {
    bytes.push_back('z');
    spit(bad, bytes);
    CHECK_THROWS_AS(load_checkpoint(bad), std::invalid_argument);
  }
  SUBCASE("flipped weight byte fails the digest") {
    bytes[bytes.size() - 3] ^= 0x40;
    spit(bad, bytes);
    CHECK_THROWS_AS(load_checkpoint(bad), std::invalid_argument);
  }
  SUBCASE("shape mismatch against the embedded config") {
    // Rebuild the file with a deeper model in the metadata; the tensor
    // inventory no longer matches.
    Checkpoint deep = ck;
    deep.config.model.depth = 2;
    std::string meta_mismatch = tmp.str() + "/mismatch.ckpt";
    save_checkpoint(meta_mismatch, deep);
    // deep now claims depth 2 but carries depth 1 weights: tensor count
    // check fires before any tensor is read.
    CHECK_THROWS_AS(load_checkpoint(meta_mismatch), std::invalid_argument);
  }
  SUBCASE("not a checkpoint at all") {
    spit(bad, {'h', 'i'});
    CHECK_THROWS_AS(load_checkpoint(bad), std::invalid_argument);
  }
}

TEST_CASE("restoring a checkpoint resumes training on the exact loss trajectory") {
  testutil::TempDir tmp("ckpt_resume");
  DatasetParams dp;
  dp.scenes = 2;
  dp.photos_per_scene = 3;
  dp.clip_len = 17;
  dp.seed = 51;
  make_dataset(tmp.str() + "/data", dp);
  std::vector<SceneData> scenes = load_training_scenes(tmp.str() + "/data");

  RunConfig rc = tiny_run_config();
  Trainer full(rc.model, rc.train);
  full.attach_data(scenes);
  std::vector<float> want;
  for (int i = 0; i < 6; ++i) want.push_back(full.train_step());

  Trainer half(rc.model, rc.train);
  half.attach_data(scenes);
  for (int i = 0; i < 3; ++i) half.train_step();

  Checkpoint ck;
  ck.config = rc;
  ck.step = half.step;
  ck.weights = half.weights;
  ck.opt = half.opt;
  ck.has_opt = true;
  std::string path = tmp.str() + "/mid.ckpt";
  save_checkpoint(path, ck);

  Checkpoint mid = load_checkpoint(path);
  Trainer resumed(mid.config.model, mid.config.train);
  resumed.attach_data(scenes);
  resumed.weights = mid.weights;
  resumed.opt = mid.opt;
  resumed.step = mid.step;
  for (int i = 3; i < 6; ++i) CHECK(resumed.train_step() == want[size_t(i)]);
}

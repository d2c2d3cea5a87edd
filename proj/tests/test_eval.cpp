#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mvdf/evalharness.hpp"
#include "test_helpers.hpp"

using namespace mvdf;

namespace {

Image constant_image(int hw, float r, float g, float b) {
  Image img(hw, hw);
  for (size_t p = 0; p < img.pixel_count(); ++p) {
    img.data[3 * p] = r;
    img.data[3 * p + 1] = g;
    img.data[3 * p + 2] = b;
  }
  return img;
}

Image random_image(int hw, uint64_t seed) {
  Image img(hw, hw);
  Rng rng(seed);
  for (auto& v : img.data) v = float(rng.uniform());
  return img;
}

// Deliberately naive SSIM: per-window two-pass statistics, no running sums.
double ssim_oracle(const Image& a, const Image& b) {
  double acc = 0;
  int windows = 0;
  for (int c = 0; c < 3; ++c)
    for (int y0 = 0; y0 + 8 <= a.height; ++y0)
      for (int x0 = 0; x0 + 8 <= a.width; ++x0) {
        double ma = 0, mb = 0;
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            ma += a.at(y0 + y, x0 + x, c);
            mb += b.at(y0 + y, x0 + x, c);
          }
        ma /= 64.0;
        mb /= 64.0;
        double va = 0, vb = 0, cov = 0;
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double da = a.at(y0 + y, x0 + x, c) - ma;
            double db = b.at(y0 + y, x0 + x, c) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        va /= 64.0;
        vb /= 64.0;
        cov /= 64.0;
        double c1 = 1e-4, c2 = 9e-4;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
  return acc / windows;
}

}  // namespace

TEST_CASE("psnr caps at 99 and matches a hand-computed mse") {
  Image a = constant_image(16, 0.5f, 0.5f, 0.5f);
  CHECK(psnr(a, a) == 99.0);
  Image b = constant_image(16, 0.6f, 0.6f, 0.6f);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));  // mse 0.01
  Image c = constant_image(8, 0.5f, 0.5f, 0.5f);
  CHECK_THROWS(psnr(a, c));
}

TEST_CASE("ssim agrees with a two-pass oracle and with closed forms") {
  SUBCASE("identical images score 1") {
    Image a = random_image(16, 3);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("constant images reduce to the luminance term") {
    Image a = constant_image(12, 0.25f, 0.25f, 0.25f);
    Image b = constant_image(12, 0.75f, 0.75f, 0.75f);
    double c1 = 1e-4;
    double want = (2 * 0.25 * 0.75 + c1) / (0.25 * 0.25 + 0.75 * 0.75 + c1);
    CHECK(ssim(a, b) == doctest::Approx(want).epsilon(1e-6));
  }
  SUBCASE("random pairs match the independent implementation") {
    for (uint64_t s = 0; s < 4; ++s) {
      Image a = random_image(13, 100 + s);
      Image b = random_image(13, 200 + s);
      CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-9));
    }
  }
  SUBCASE("more distortion scores lower") {
    Image a = random_image(16, 7);
    Image mild = a, harsh = a;
    Rng rng(8);
    for (auto& v : mild.data) v = clamp01(v + 0.02f * rng.normalf());
    Rng rng2(8);
    for (auto& v : harsh.data) v = clamp01(v + 0.2f * rng2.normalf());
    CHECK(ssim(a, mild) > ssim(a, harsh));
  }
}

TEST_CASE("crossfade weights step evenly between the endpoints") {
  Image a = constant_image(8, 0.0f, 0.2f, 1.0f);
  Image b = constant_image(8, 1.0f, 0.6f, 0.0f);
  auto fade = crossfade_baseline(a, b, 3);
  REQUIRE(fade.size() == 3);
  CHECK(fade[0].at(0, 0, 0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(fade[1].at(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(fade[2].at(0, 0, 1) == doctest::Approx(0.2 + 0.75 * 0.4).epsilon(1e-6));
  CHECK(crossfade_baseline(a, b, 0).empty());
}

TEST_CASE("appearance drift is the worst consecutive channel-mean step") {
  std::vector<Image> frames;
  frames.push_back(constant_image(8, 0.1f, 0.1f, 0.1f));
  frames.push_back(constant_image(8, 0.6f, 0.6f, 0.6f));  // +0.5 on every channel
  frames.push_back(constant_image(8, 0.6f, 0.6f, 0.6f));
  CHECK(appearance_drift(frames) == doctest::Approx(0.5).epsilon(1e-6));

  std::vector<Image> gentle;
  for (int i = 0; i < 5; ++i)
    gentle.push_back(constant_image(8, 0.1f + 0.01f * i, 0.1f, 0.1f));
  CHECK(appearance_drift(gentle) == doctest::Approx(0.01 / std::sqrt(3.0)).epsilon(1e-4));
  CHECK_THROWS(appearance_drift({constant_image(8, 0, 0, 0)}));
}

TEST_CASE("the eval harness scores a dataset deterministically") {
  testutil::TempDir tmp("eval_harness");
  DatasetParams dp;
  dp.scenes = 2;
  dp.photos_per_scene = 3;
  dp.clip_len = 17;
  dp.seed = 123;
  make_dataset(tmp.str(), dp);

  ModelConfig cfg;
  cfg.width = 32;
  cfg.depth = 1;
  cfg.heads = 4;
  cfg.patch_size = 8;
  cfg.image_h = cfg.image_w = 32;
  cfg.appearance_dim = 8;
  Weights<float> w = init_weights<float>(cfg, 9);

  EvalConfig ec;
  ec.sets_per_pair = 2;
  ec.min_keyframes = 2;
  ec.max_keyframes = 3;
  ec.steps = 2;
  ec.seed = 4;
  testutil::TempDir strips("eval_strips");
  ec.strips_dir = strips.str();

  EvalReport rep = run_eval(w, tmp.str(), ec);
  REQUIRE(rep.rows.size() == 8);  // 2 scenes x n in {2,3} x 2 sets

  double acc = 0;
  for (const auto& r : rep.rows) {
    CHECK(r.psnr_model > 0);
    CHECK(r.psnr_base > 0);
    CHECK(r.ssim_model <= 1.0);
    CHECK(r.ssim_base <= 1.0);
    CHECK(r.drift_model >= 0);
    acc += r.psnr_base;
  }
  CHECK(rep.mean_psnr_base == doctest::Approx(acc / 8.0).epsilon(1e-9));

  EvalConfig ec2 = ec;
  ec2.strips_dir.clear();
  EvalReport again = run_eval(w, tmp.str(), ec2);
  REQUIRE(again.rows.size() == rep.rows.size());
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    CHECK(again.rows[i].psnr_model == rep.rows[i].psnr_model);
    CHECK(again.rows[i].ssim_model == rep.rows[i].ssim_model);
  }

  namespace fs = std::filesystem;
  CHECK(fs::exists(fs::path(strips.str()) / "scene00_n2_set0.png"));
  CHECK(fs::exists(fs::path(strips.str()) / "scene01_n3_set1.png"));

  std::string report_path = (fs::path(tmp.str()) / "report.json").string();
  write_report_json(rep, ec, report_path);
  std::ifstream in(report_path);
  auto doc = nlohmann::json::parse(in);
  CHECK(doc.at("rows").size() == 8);
  CHECK(doc.at("aggregates").at("psnr_baseline").get<double>() ==
        doctest::Approx(rep.mean_psnr_base));
  CHECK(doc.at("protocol").at("steps").get<int>() == 2);
  CHECK(doc.at("weights_hash").get<std::string>().size() == 16);
}

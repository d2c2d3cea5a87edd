#include <doctest.h>

#include <cmath>

#include "mvdf/infer.hpp"
#include "test_helpers.hpp"

using namespace mvdf;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.width = 32;
  cfg.depth = 1;
  cfg.heads = 4;
  cfg.patch_size = 8;
  cfg.image_h = cfg.image_w = 32;
  cfg.appearance_dim = 8;
  return cfg;
}

Image noise_image(int hw, uint64_t seed) {
  Image img(hw, hw);
  Rng rng(seed);
  for (auto& v : img.data) v = float(rng.uniform());
  return img;
}

GenerationRequest tiny_request(int n, uint64_t seed = 1) {
  GenerationRequest req;
  for (int a = 0; a < n; ++a) req.keyframes.push_back(noise_image(32, mix64(seed, uint64_t(a))));
  req.steps = 4;
  req.seed = seed;
  req.diffusion_steps = 100;
  return req;
}

}  // namespace

TEST_CASE("generation produces fifteen frames per keyframe gap") {
  Weights<float> w = init_weights<float>(tiny_config(), 3);
  for (int n = 2; n <= 5; ++n) {
    GenerationResult r = generate(w, tiny_request(n));
    CHECK(r.frames.size() == size_t(15 * (n - 1)));
    for (const auto& f : r.frames) {
      CHECK(f.height == 32);
      CHECK(f.width == 32);
    }
  }
}

TEST_CASE("generation is deterministic in the seed and sensitive to it") {
  Weights<float> w = init_weights<float>(tiny_config(), 3);
  GenerationResult a = generate(w, tiny_request(2, 7));
  GenerationResult b = generate(w, tiny_request(2, 7));
  REQUIRE(a.frames.size() == b.frames.size());
  for (size_t i = 0; i < a.frames.size(); ++i) REQUIRE(a.frames[i].data == b.frames[i].data);

  GenerationRequest other = tiny_request(2, 7);
  other.seed = 8;
  GenerationResult c = generate(w, other);
  bool differs = false;
  for (size_t i = 0; i < a.frames.size(); ++i)
    if (a.frames[i].data != c.frames[i].data) differs = true;
  CHECK(differs);
}

TEST_CASE("malformed generation requests are rejected") {
  Weights<float> w = init_weights<float>(tiny_config(), 3);
  CHECK_THROWS(generate(w, tiny_request(1)));
  CHECK_THROWS(generate(w, tiny_request(6)));

  GenerationRequest req = tiny_request(2);
  req.steps = 0;
  CHECK_THROWS(generate(w, req));

  req = tiny_request(2);
  req.masks.emplace_back(32, 32);  // one mask for two keyframes
  CHECK_THROWS(generate(w, req));

  req = tiny_request(2);
  req.keyframes[0] = noise_image(16, 1);
  CHECK_THROWS(generate(w, req));
}

TEST_CASE("keyframe masks and appearance settings steer the output") {
  Weights<float> w = init_weights<float>(tiny_config(), 4);
  GenerationRequest base = tiny_request(2, 11);
  GenerationResult plain = generate(w, base);

  SUBCASE("hiding keyframe pixels changes the result") {
    GenerationRequest masked = base;
    masked.masks.assign(2, Mask(32, 32));
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) masked.masks[0].at(y, x) = 255;
    GenerationResult r = generate(w, masked);
    bool differs = false;
    for (size_t i = 0; i < r.frames.size(); ++i)
      if (r.frames[i].data != plain.frames[i].data) differs = true;
    CHECK(differs);
  }

  SUBCASE("an all-zero mask changes nothing") {
    GenerationRequest masked = base;
    masked.masks.assign(2, Mask(32, 32));
    GenerationResult r = generate(w, masked);
    for (size_t i = 0; i < r.frames.size(); ++i) CHECK(r.frames[i].data == plain.frames[i].data);
  }

  SUBCASE("disabling appearance conditioning changes the result") {
    GenerationRequest off = base;
    off.use_appearance = false;
    GenerationResult r = generate(w, off);
    bool differs = false;
    for (size_t i = 0; i < r.frames.size(); ++i)
      if (r.frames[i].data != plain.frames[i].data) differs = true;
    CHECK(differs);
  }

  SUBCASE("descriptor overrides change the result") {
    GenerationRequest od = base;
    od.descriptors.assign(2, Matf::Constant(1, 8, 0.5f));
    GenerationResult r = generate(w, od);
    bool differs = false;
    for (size_t i = 0; i < r.frames.size(); ++i)
      if (r.frames[i].data != plain.frames[i].data) differs = true;
    CHECK(differs);
  }

  SUBCASE("appearance source defaults to the first keyframe") {
    GenerationRequest explicit_src = base;
    explicit_src.appearance_source = base.keyframes[0];
    GenerationResult r = generate(w, explicit_src);
    for (size_t i = 0; i < r.frames.size(); ++i) CHECK(r.frames[i].data == plain.frames[i].data);

    GenerationRequest bright = base;
    bright.appearance_source = Image(32, 32);
    for (float& v : bright.appearance_source.data) v = 0.9f;
    GenerationResult rb = generate(w, bright);
    bool differs = false;
    for (size_t i = 0; i < rb.frames.size(); ++i)
      if (rb.frames[i].data != plain.frames[i].data) differs = true;
    CHECK(differs);
    CHECK(rb.request_hash != plain.request_hash);
  }
}

TEST_CASE("chained windows extend generation past five keyframes") {
  Weights<float> w = init_weights<float>(tiny_config(), 5);
  CHECK(generate_chained(w, tiny_request(7)).frames.size() == 90);
  CHECK(generate_chained(w, tiny_request(6)).frames.size() == 75);
  CHECK(generate_chained(w, tiny_request(3)).frames.size() == 30);

  // The first window is bitwise the same whether or not a second window runs,
  // because window seeds derive from (seed, window index).
  GenerationRequest five = tiny_request(5, 13);
  GenerationRequest six = tiny_request(6, 13);
  for (int a = 0; a < 5; ++a) six.keyframes[a] = five.keyframes[a];
  GenerationRequest five_w = five;
  five_w.seed = mix64(13ull, 0x636861696eull, 0ull);
  GenerationResult head = generate(w, five_w);
  GenerationResult chained = generate_chained(w, six);
  for (int i = 0; i < 60; ++i) REQUIRE(chained.frames[i].data == head.frames[i].data);

  // A tight frame budget shrinks the window but never the output count.
  ModelConfig small = tiny_config();
  small.max_frames = 33;
  Weights<float> ws = init_weights<float>(small, 6);
  CHECK(generate_chained(ws, tiny_request(6)).frames.size() == 75);
  CHECK(generate_chained(ws, tiny_request(4)).frames.size() == 45);
  CHECK(generate_chained(ws, tiny_request(2)).frames.size() == 15);
  small.max_frames = 16;
  Weights<float> wtiny = init_weights<float>(small, 7);
  CHECK_THROWS(generate_chained(wtiny, tiny_request(2)));
}

TEST_CASE("strip assembly interleaves keyframes with their gaps") {
  std::vector<Image> keys = {noise_image(8, 1), noise_image(8, 2), noise_image(8, 3)};
  std::vector<Image> gen;
  for (int i = 0; i < 30; ++i) gen.push_back(noise_image(8, 100 + i));
  auto strip = full_strip(keys, gen);
  REQUIRE(strip.size() == 33);
  CHECK(strip[0].data == keys[0].data);
  CHECK(strip[16].data == keys[1].data);
  CHECK(strip[32].data == keys[2].data);
  CHECK(strip[1].data == gen[0].data);
  CHECK(strip[17].data == gen[15].data);
  CHECK_THROWS(full_strip(keys, std::vector<Image>(29, noise_image(8, 9))));
}

TEST_CASE("swapping distinct keyframes perturbs the output, identical ones do not") {
  Weights<float> w = init_weights<float>(tiny_config(), 6);
  GenerationRequest req = tiny_request(3, 17);
  CHECK(reorder_sensitivity(w, req) > 0.0);

  GenerationRequest same = req;
  same.keyframes[2] = same.keyframes[1];
  CHECK(reorder_sensitivity(w, same) == 0.0);
}

TEST_CASE("digests track request and weight content") {
  Weights<float> w = init_weights<float>(tiny_config(), 7);
  GenerationRequest a = tiny_request(2, 1);
  GenerationRequest b = tiny_request(2, 1);
  CHECK(request_digest(a) == request_digest(b));
  b.steps = 5;
  CHECK(request_digest(a) != request_digest(b));

  uint64_t h0 = weights_digest(w);
  CHECK(h0 == weights_digest(w));
  w.head_b(0, 0) += 1.0f;
  CHECK(h0 != weights_digest(w));
}

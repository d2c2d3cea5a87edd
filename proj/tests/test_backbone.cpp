#include <doctest.h>

#include <chrono>

#include "mvdf/backbone.hpp"
#include "test_helpers.hpp"

using namespace mvdf;

namespace {

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.width = 32;
  cfg.depth = 2;
  cfg.heads = 4;
  cfg.patch_size = 4;
  cfg.image_h = 16;
  cfg.image_w = 16;
  cfg.appearance_dim = 8;
  cfg.max_frames = 65;
  return cfg;
}

}  // namespace

TEST_CASE("config validation rejects inconsistent shapes") {
  ModelConfig cfg = toy_config();
  CHECK_NOTHROW(validate(cfg));
  cfg.heads = 5;
  CHECK_THROWS(validate(cfg));
  cfg = toy_config();
  cfg.patch_size = 5;
  CHECK_THROWS(validate(cfg));
  cfg = toy_config();
  cfg.depth = 0;
  CHECK_THROWS(validate(cfg));
}

TEST_CASE("init is deterministic per seed and differs across seeds") {
  ModelConfig cfg = toy_config();
  auto a = init_weights<float>(cfg, 11);
  auto b = init_weights<float>(cfg, 11);
  auto c = init_weights<float>(cfg, 12);
  double diff_ab = 0, diff_ac = 0;
  std::vector<Matf*> ta, tb, tc;
  a.visit([&](const std::string&, Matf& m) { ta.push_back(&m); });
  b.visit([&](const std::string&, Matf& m) { tb.push_back(&m); });
  c.visit([&](const std::string&, Matf& m) { tc.push_back(&m); });
  for (size_t i = 0; i < ta.size(); ++i) {
    diff_ab += (*ta[i] - *tb[i]).cwiseAbs().sum();
    diff_ac += (*ta[i] - *tc[i]).cwiseAbs().sum();
  }
  CHECK(diff_ab == 0.0);
  CHECK(diff_ac > 0.0);
}

TEST_CASE("parameter count matches the closed-form shape inventory") {
  ModelConfig cfg = toy_config();
  const int64_t c = cfg.width, dp = cfg.patch_dim(), da = cfg.appearance_dim;
  int64_t embed = c * dp + c + int64_t(cfg.max_frames) * c + c * da + c + c * c + c + 2 * c + dp;
  int64_t pos = int64_t(cfg.tokens_per_frame()) * c;
  int64_t block = 2 * c + (3 * c * c + 3 * c) + (c * c + c) + 2 * c + (4 * c * c + 4 * c) +
                  (4 * c * c + c);
  int64_t head = 2 * c + dp * c + dp + dp * dp;
  CHECK(param_count(cfg) == embed + pos + cfg.depth * block + head);
}

TEST_CASE("forward is deterministic and depends on token positions") {
  ModelConfig cfg = toy_config();
  auto w = init_weights<float>(cfg, 3);
  RawSequence seq = testutil::make_toy_sequence(cfg, 21);
  Matf p1 = forward(w, seq);
  Matf p2 = forward(w, seq);
  CHECK(p1 == p2);
  CHECK(p1.rows() == seq.token_count());
  CHECK(p1.cols() == cfg.patch_dim());

  // Swapping the contents of two condition tokens changes noisy predictions:
  // attention is global, so clean content reaches every output.
  RawSequence swapped = seq;
  swapped.patches.row(0).swap(swapped.patches.row(5));
  Matf p3 = forward(w, swapped);
  int tpf = cfg.tokens_per_frame();
  double delta = (p3.bottomRows(tpf) - p1.bottomRows(tpf)).cwiseAbs().maxCoeff();
  CHECK(delta > 0.0);
}

TEST_CASE("sequences beyond the frame budget or wrong shapes are rejected") {
  ModelConfig cfg = toy_config();
  cfg.max_frames = 3;
  auto w = init_weights<float>(cfg, 3);
  CHECK_NOTHROW(forward(w, testutil::make_toy_sequence(cfg, 5, 3)));
  CHECK_THROWS(forward(w, testutil::make_toy_sequence(cfg, 5, 4)));

  RawSequence bad = testutil::make_toy_sequence(cfg, 5, 2);
  bad.meta[3].spatial_index = cfg.tokens_per_frame();
  CHECK_THROWS(forward(w, bad));
}

TEST_CASE("masked loss arithmetic on a hand-computed example") {
  Mat<float> pred(2, 1), target(2, 1);
  pred << 0.0f, 0.4f;
  target << 1.0f, 0.1f;
  SUBCASE("only the second token is loss-bearing") {
    auto loss = masked_mse(pred, target, {0, 1});
    CHECK(loss.masked_count == 1);
    CHECK(loss.value == doctest::Approx(0.09).epsilon(1e-6));
  }
  SUBCASE("empty mask reports zero with the warning count") {
    auto loss = masked_mse(pred, target, {0, 0});
    CHECK(loss.masked_count == 0);
    CHECK(loss.value == 0.0f);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  // Double precision end to end; perturbs a wide spread of parameters
  // covering every tensor family, including embeddings and the mask token.
  ModelConfig cfg = toy_config();
  auto start = std::chrono::steady_clock::now();
  WeightsD w = init_weights<double>(cfg, 17);
  RawSequence seq = testutil::make_toy_sequence(cfg, 23);
  seq.meta[2].masked = true;  // exercise the mask token path
  const int n = seq.token_count();
  const int tpf = cfg.tokens_per_frame();

  Rng rng(31);
  Mat<double> eps = Mat<double>::Zero(n, cfg.patch_dim());
  std::vector<uint8_t> mask(n, 0);
  for (int i = tpf; i < n; ++i) {
    mask[i] = 1;
    for (int j = 0; j < cfg.patch_dim(); ++j) eps(i, j) = rng.normal();
  }
  mask[tpf + 1] = 0;  // one excluded noisy token

  WeightsD grads = zero_weights<double>(cfg);
  double loss = loss_and_grads(w, seq, eps, mask, grads);
  CHECK(loss > 0.0);

  struct Slot {
    Mat<double>* w;
    Mat<double>* g;
    std::string name;
  };
  std::vector<Slot> slots;
  {
    std::vector<Mat<double>*> ws, gs;
    std::vector<std::string> names;
    w.visit([&](const std::string& nm, Mat<double>& m) {
      ws.push_back(&m);
      names.push_back(nm);
    });
    grads.visit([&](const std::string&, Mat<double>& m) { gs.push_back(&m); });
    for (size_t i = 0; i < ws.size(); ++i) slots.push_back({ws[i], gs[i], names[i]});
  }

  auto loss_at = [&]() {
    Mat<double> pred = forward(w, seq);
    return double(masked_mse(pred, eps, mask).value);
  };

  const double h = 1e-5;
  int checked = 0;
  double worst = 0.0;
  Rng pick(47);
  // Visit one random scalar inside every tensor first, then top up randomly.
  std::vector<std::pair<size_t, Eigen::Index>> targets;
  for (size_t s = 0; s < slots.size(); ++s)
    targets.push_back({s, Eigen::Index(pick.uniform_int(0, slots[s].w->size() - 1))});
  while (targets.size() < 120) {
    size_t s = size_t(pick.uniform_int(0, int64_t(slots.size()) - 1));
    targets.push_back({s, Eigen::Index(pick.uniform_int(0, slots[s].w->size() - 1))});
  }
  for (auto [s, flat] : targets) {
    double* ptr = slots[s].w->data() + flat;
    double orig = *ptr;
    *ptr = orig + h;
    double lp = loss_at();
    *ptr = orig - h;
    double lm = loss_at();
    *ptr = orig;
    double fd = (lp - lm) / (2 * h);
    double an = *(slots[s].g->data() + flat);
    double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
    if (rel > worst) worst = rel;
    INFO("tensor " << slots[s].name << " flat " << flat << " fd " << fd << " analytic " << an);
    CHECK(rel <= 1e-3);
    ++checked;
  }
  CHECK(checked >= 100);
  auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
      std::chrono::steady_clock::now() - start);
  CHECK(elapsed.count() < 300);
  MESSAGE("gradient check: " << checked << " parameters, worst relative error " << worst);
}

TEST_CASE("gradients flow only from loss-masked tokens") {
  ModelConfig cfg = toy_config();
  WeightsD w = init_weights<double>(cfg, 5);
  RawSequence seq = testutil::make_toy_sequence(cfg, 29);
  const int n = seq.token_count();
  Mat<double> eps = Mat<double>::Random(n, cfg.patch_dim());
  std::vector<uint8_t> none(n, 0);
  WeightsD grads = zero_weights<double>(cfg);
  double loss = loss_and_grads(w, seq, eps, none, grads);
  CHECK(loss == 0.0);
  double total = 0;
  grads.visit([&](const std::string&, Mat<double>& m) { total += m.cwiseAbs().sum(); });
  CHECK(total == 0.0);
}

#include <doctest.h>

#include "mvdf/rng.hpp"
#include "mvdf/schedule.hpp"

using namespace mvdf;

TEST_CASE("linear schedule endpoints and cumulative products") {
  NoiseSchedule s = build_schedule(2, ScheduleKind::linear);
  CHECK(s.betas[0] == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.betas[1] == doctest::Approx(2e-2).epsilon(1e-12));
  CHECK(s.alphas[0] == doctest::Approx(1.0 - 1e-4));
  CHECK(s.alpha_bars[0] == doctest::Approx(1.0 - 1e-4));
  CHECK(s.alpha_bars[1] == doctest::Approx((1.0 - 1e-4) * (1.0 - 2e-2)));
}

TEST_CASE("schedule invariants hold for both kinds and several horizons") {
  for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
    for (int T : {1, 2, 10, 1000}) {
      NoiseSchedule s = build_schedule(T, kind);
      REQUIRE(int(s.betas.size()) == T);
      double prod = 1.0;
      for (int t = 0; t < T; ++t) {
        CHECK(s.betas[t] > 0.0);
        CHECK(s.betas[t] < 1.0);
        CHECK(s.alphas[t] == 1.0 - s.betas[t]);
        prod *= s.alphas[t];
        CHECK(s.alpha_bars[t] == doctest::Approx(prod).epsilon(1e-14));
        if (t > 0) CHECK(s.alpha_bars[t] < s.alpha_bars[t - 1]);
      }
      CHECK(s.alpha_bars[T - 1] > 0.0);
    }
  }
}

TEST_CASE("signal-to-noise ratio decreases strictly in t") {
  for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
    NoiseSchedule s = build_schedule(1000, kind);
    for (int t = 1; t < 1000; ++t) CHECK(s.snr(t) < s.snr(t - 1));
  }
}

TEST_CASE("add_noise at t=0 stays close to the input") {
  NoiseSchedule s = build_schedule(1000, ScheduleKind::linear);
  Matf x0(2, 3), eps(2, 3);
  x0 << 0.5f, -1.0f, 0.25f, 1.0f, 0.0f, -0.5f;
  eps.setOnes();
  Matf xt = add_noise(x0, eps, 0, s);
  // beta_0 = 1e-4: sqrt(1 - 1e-4) ~ 0.99995, sqrt(1e-4) = 0.01.
  CHECK(xt(0, 0) == doctest::Approx(0.5 * std::sqrt(1.0 - 1e-4) + std::sqrt(1e-4)).epsilon(1e-6));
  CHECK((xt - x0).cwiseAbs().maxCoeff() < 0.02f);
}

TEST_CASE("moment check: add_noise matches closed-form mean and variance") {
  // t in the mid-low range keeps sqrt(alpha_bar)*x0 large enough that the 1%
  // relative bound sits several sigma above the 1e5-draw estimator noise.
  NoiseSchedule s = build_schedule(1000, ScheduleKind::linear);
  const int t = 250;
  const int draws = 100000;
  Matf x0(1, 4);
  x0 << 1.0f, -0.9f, 1.1f, -0.95f;
  Rng rng(99);
  Eigen::Array4d sum = Eigen::Array4d::Zero(), sumsq = Eigen::Array4d::Zero();
  for (int d = 0; d < draws; ++d) {
    Matf eps(1, 4);
    for (int j = 0; j < 4; ++j) eps(0, j) = rng.normalf();
    Matf xt = add_noise(x0, eps, t, s);
    for (int j = 0; j < 4; ++j) {
      sum[j] += xt(0, j);
      sumsq[j] += double(xt(0, j)) * xt(0, j);
    }
  }
  double want_scale = std::sqrt(s.alpha_bars[t]);
  double want_var = 1.0 - s.alpha_bars[t];
  for (int j = 0; j < 4; ++j) {
    double mean = sum[j] / draws;
    double var = sumsq[j] / draws - mean * mean;
    CHECK(std::abs(mean - want_scale * x0(0, j)) / std::abs(want_scale * x0(0, j)) < 0.01);
    CHECK(std::abs(var - want_var) / want_var < 0.01);
  }
}

TEST_CASE("timestep subsequences are strictly decreasing and hit the ends") {
  SUBCASE("full horizon") {
    auto idx = make_timestep_subsequence(10, 10);
    REQUIRE(idx.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(idx[i] == 9 - i);
  }
  SUBCASE("single step") {
    auto idx = make_timestep_subsequence(10, 1);
    REQUIRE(idx.size() == 1);
    CHECK(idx[0] == 9);
  }
  SUBCASE("default sampler grid") {
    auto idx = make_timestep_subsequence(1000, 50);
    REQUIRE(idx.size() == 50);
    CHECK(idx.front() == 999);
    CHECK(idx.back() == 0);
    for (size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] < idx[i - 1]);
  }
  SUBCASE("near-full subsequence stays strictly decreasing") {
    for (int steps : {2, 3, 7, 9, 10}) {
      auto idx = make_timestep_subsequence(10, steps);
      for (size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] < idx[i - 1]);
      CHECK(idx.front() == 9);
      if (steps > 1) CHECK(idx.back() == 0);
    }
  }
  CHECK_THROWS(make_timestep_subsequence(10, 0));
  CHECK_THROWS(make_timestep_subsequence(10, 11));
}

TEST_CASE("reverse chain with the true noise recovers the clean input") {
  // Noising with a known eps and stepping back while predicting that same eps
  // must return to x0 up to float round-off at every subsequence granularity.
  NoiseSchedule s = build_schedule(1000, ScheduleKind::linear);
  Rng rng(7);
  Matf x0(3, 5), eps(3, 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      x0(i, j) = rng.normalf() * 0.7f;
      eps(i, j) = rng.normalf();
    }
  for (int steps : {1, 5, 50}) {
    auto idx = make_timestep_subsequence(1000, steps);
    Matf x = add_noise(x0, eps, idx[0], s);
    for (size_t i = 0; i + 1 < idx.size(); ++i) x = ddim_step(x, eps, idx[i], idx[i + 1], s);
    x = ddim_step(x, eps, idx.back(), kFinalStep, s);
    CHECK((x - x0).cwiseAbs().maxCoeff() < 1e-5f);
  }
}

TEST_CASE("ddim_step rejects malformed timesteps") {
  NoiseSchedule s = build_schedule(100, ScheduleKind::linear);
  Matf x = Matf::Zero(1, 2), e = Matf::Zero(1, 2);
  CHECK_THROWS(ddim_step(x, e, 100, 50, s));
  CHECK_THROWS(ddim_step(x, e, 50, 50, s));
  CHECK_THROWS(ddim_step(x, e, 50, 60, s));
  CHECK_THROWS(add_noise(x, e, -1, s));
  CHECK_THROWS(add_noise(x, e, 100, s));
}

#include "mvdf/schedule.hpp"

#include <cmath>
#include <numbers>

namespace mvdf {

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::linear ? "linear" : "cosine";
}

NoiseSchedule build_schedule(int T, ScheduleKind kind) {
  MVDF_CHECK(T >= 1, "build_schedule: T must be >= 1, got " << T);
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  if (kind == ScheduleKind::linear) {
    const double lo = 1e-4, hi = 2e-2;
    for (int t = 0; t < T; ++t) {
      double f = T == 1 ? 0.0 : double(t) / double(T - 1);
      s.betas[t] = lo + (hi - lo) * f;
    }
  } else {
    // Squared-cosine alpha_bar target with small offset; betas recovered from
    // consecutive ratios and clipped so every beta stays in (0, 0.999].
    const double off = 0.008;
    auto f = [&](double t) {
      double v = std::cos((t / T + off) / (1.0 + off) * std::numbers::pi / 2.0);
      return v * v;
    };
    double f0 = f(0.0);
    double prev = 1.0;
    for (int t = 0; t < T; ++t) {
      double cur = f(double(t) + 1.0) / f0;
      double beta = 1.0 - cur / prev;
      s.betas[t] = std::min(std::max(beta, 1e-8), 0.999);
      prev = cur;
    }
  }
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.alphas[t] = 1.0 - s.betas[t];
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

std::vector<int> make_timestep_subsequence(int T, int steps) {
  MVDF_CHECK(steps >= 1 && steps <= T,
             "make_timestep_subsequence: steps " << steps << " outside [1, " << T << "]");
  std::vector<int> out(steps);
  if (steps == 1) {
    out[0] = T - 1;
    return out;
  }
  for (int i = 0; i < steps; ++i) {
    double x = double(T - 1) * (1.0 - double(i) / double(steps - 1));
    out[i] = static_cast<int>(std::llround(x));
  }
  return out;
}

}  // namespace mvdf

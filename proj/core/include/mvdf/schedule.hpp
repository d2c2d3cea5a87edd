#pragma once

#include <string>
#include <vector>

#include "mvdf/common.hpp"

namespace mvdf {

enum class ScheduleKind { linear, cosine };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// Forward-process coefficients. alphas[t] = 1 - betas[t] and alpha_bars is
// their running product, so alpha_bars is strictly decreasing and positive.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  double snr(int t) const { return alpha_bars[t] / (1.0 - alpha_bars[t]); }
};

// Linear: betas evenly spaced over [1e-4, 2e-2]. Cosine: betas derived from a
// squared-cosine alpha_bar target, clipped to (0, 0.999].
NoiseSchedule build_schedule(int T, ScheduleKind kind);

// Evenly spaced (by index) strictly decreasing timesteps from T-1 down to 0.
// steps == 1 yields {T-1}; steps == T yields every index.
std::vector<int> make_timestep_subsequence(int T, int steps);

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, elementwise.
template <typename Derived>
auto add_noise(const Eigen::MatrixBase<Derived>& x0, const Eigen::MatrixBase<Derived>& eps,
               int t, const NoiseSchedule& sched) {
  MVDF_CHECK(t >= 0 && t < sched.T, "add_noise: timestep " << t << " outside [0, " << sched.T << ")");
  MVDF_CHECK(x0.rows() == eps.rows() && x0.cols() == eps.cols(),
             "add_noise: x0 and eps shapes differ");
  using S = typename Derived::Scalar;
  S a = static_cast<S>(std::sqrt(sched.alpha_bars[t]));
  S b = static_cast<S>(std::sqrt(1.0 - sched.alpha_bars[t]));
  return (a * x0 + b * eps).eval();
}

// Deterministic reverse step (no stochastic term), eps-prediction convention:
//   x0_hat  = (x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t)
//   x_prev  = sqrt(alpha_bar_prev) x0_hat + sqrt(1 - alpha_bar_prev) eps_hat
// t_prev == kFinalStep denotes the end of the chain (alpha_bar treated as 1),
// in which case x0_hat itself is returned.
inline constexpr int kFinalStep = -1;

template <typename Derived>
auto ddim_step(const Eigen::MatrixBase<Derived>& xt, const Eigen::MatrixBase<Derived>& eps_hat,
               int t, int t_prev, const NoiseSchedule& sched) {
  MVDF_CHECK(t >= 0 && t < sched.T, "ddim_step: timestep " << t << " outside [0, " << sched.T << ")");
  MVDF_CHECK(t_prev == kFinalStep || (t_prev >= 0 && t_prev < t),
             "ddim_step: t_prev " << t_prev << " must be in [0, " << t << ") or final");
  MVDF_CHECK(xt.rows() == eps_hat.rows() && xt.cols() == eps_hat.cols(),
             "ddim_step: xt and eps_hat shapes differ");
  using S = typename Derived::Scalar;
  double ab_t = sched.alpha_bars[t];
  S inv_sqrt_ab = static_cast<S>(1.0 / std::sqrt(ab_t));
  S sig_t = static_cast<S>(std::sqrt(1.0 - ab_t));
  auto x0_hat = ((xt - sig_t * eps_hat) * inv_sqrt_ab).eval();
  if (t_prev == kFinalStep) return x0_hat;
  double ab_p = sched.alpha_bars[t_prev];
  S a = static_cast<S>(std::sqrt(ab_p));
  S b = static_cast<S>(std::sqrt(1.0 - ab_p));
  return (a * x0_hat + b * eps_hat).eval();
}

}  // namespace mvdf

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ouro/grid.hpp"

namespace ouro {

// Discrete noise schedule indexed by timestep t = 1..T, with alpha_bar(0) == 1.
class NoiseSchedule {
 public:
  // Accepts any betas in [0, 1). A zero beta gives a noise-free transition,
  // which build_schedule never produces but tests use for identity checks.
  static NoiseSchedule from_betas(std::vector<double> betas) {
    if (betas.empty()) throw ConfigError("T", "schedule needs at least one step");
    NoiseSchedule s;
    s.betas_ = std::move(betas);
    s.alphas_.resize(s.betas_.size());
    s.alpha_bars_.resize(s.betas_.size() + 1);
    s.alpha_bars_[0] = 1.0;
    for (std::size_t i = 0; i < s.betas_.size(); ++i) {
      const double b = s.betas_[i];
      if (!(b >= 0.0 && b < 1.0)) {
        throw ConfigError("schedule.betas", "beta at t=" + std::to_string(i + 1) + " outside [0,1)");
      }
      s.alphas_[i] = 1.0 - b;
      s.alpha_bars_[i + 1] = s.alpha_bars_[i] * s.alphas_[i];
    }
    return s;
  }

  int steps() const noexcept { return static_cast<int>(betas_.size()); }

  double beta(int t) const { return betas_.at(checked(t, 1) - 1); }
  double alpha(int t) const { return alphas_.at(checked(t, 1) - 1); }
  double alpha_bar(int t) const { return alpha_bars_.at(checked(t, 0)); }

  const std::vector<double>& betas() const noexcept { return betas_; }
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  // alpha_bar(1..T); alpha_bar(0) is implicit.
  std::vector<double> alpha_bars() const { return {alpha_bars_.begin() + 1, alpha_bars_.end()}; }

 private:
  NoiseSchedule() = default;

  int checked(int t, int lo) const {
    if (t < lo || t > steps()) {
      throw TimestepError("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                          "," + std::to_string(steps()) + "]");
    }
    return t;
  }

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

// Linear beta ladder from beta_start to beta_end over T steps.
inline NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
  if (T < 2) throw ConfigError("T", "must be at least 2, got " + std::to_string(T));
  if (!(beta_start > 0.0 && beta_start < 1.0)) {
    throw ConfigError("schedule.beta_start", "must lie in (0,1)");
  }
  if (!(beta_end >= beta_start && beta_end < 1.0)) {
    throw ConfigError("schedule.beta_end", "must lie in [beta_start,1)");
  }
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) {
    betas[static_cast<std::size_t>(i)] =
        beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(T - 1);
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

// q(z_t | x0): sqrt(ab_t) x0 + sqrt(1 - ab_t) eps. t == 0 returns x0.
inline Grid forward_diffuse(const Grid& x0, int t, const Grid& eps, const NoiseSchedule& sched) {
  x0.require_same_shape(eps, "forward_diffuse");
  const double ab = sched.alpha_bar(t);
  return axpby(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

// Clean-sample estimate implied by a noise prediction at level t.
inline Grid predict_x0(const Grid& z_t, const Grid& eps_hat, int t, const NoiseSchedule& sched) {
  z_t.require_same_shape(eps_hat, "predict_x0");
  if (t < 1) throw TimestepError("predict_x0 needs t >= 1");
  const double ab = sched.alpha_bar(t);
  const double inv = 1.0 / std::sqrt(ab);
  return axpby(inv, z_t, -std::sqrt(1.0 - ab) * inv, eps_hat);
}

// Deterministic DDIM update (eta = 0) from level t to t-1.
inline Grid ddim_step(const Grid& z_t, const Grid& eps_hat, int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw TimestepError("ddim_step: timestep " + std::to_string(t) + " outside [1," +
                        std::to_string(sched.steps()) + "]");
  }
  const Grid x0 = predict_x0(z_t, eps_hat, t, sched);
  const double ab_prev = sched.alpha_bar(t - 1);
  return axpby(std::sqrt(ab_prev), x0, std::sqrt(1.0 - ab_prev), eps_hat);
}

// One-level forward transition q(z_t | z_{t-1}).
inline Grid renoise(const Grid& z_prev, int t, const Grid& eta, const NoiseSchedule& sched) {
  if (t < 2 || t > sched.steps()) {
    throw TimestepError("renoise: target level " + std::to_string(t) + " outside [2," +
                        std::to_string(sched.steps()) + "]");
  }
  z_prev.require_same_shape(eta, "renoise");
  const double ratio = sched.alpha(t);
  return axpby(std::sqrt(ratio), z_prev, std::sqrt(1.0 - ratio), eta);
}

}  // namespace ouro

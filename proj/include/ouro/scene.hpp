#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "ouro/attention.hpp"
#include "ouro/grid.hpp"
#include "ouro/rng.hpp"
#include "ouro/schedule.hpp"

namespace ouro {

struct SubjectSpec {
  int id = 1;
  double radius = 5.0;     // cells
  double velocity[2] = {0.0, 0.0};  // (dy, dx) cells per frame
  double position[2] = {0.0, 0.0};  // (y, x) at frame 0
  double amplitude = 1.0;
};

// Synthetic world of cosine-profile blobs on a torus.
struct SceneSpec {
  Shape shape{4, 32, 32};
  std::vector<SubjectSpec> subjects;
  double background = 0.0;
  std::uint64_t seed = 0;
  double sigma_d = 0.5;  // spread of generated content around the rendered scene
};

struct RenderedFrame {
  Grid latent;
  Mask subject_mask;
};

// Per-channel gain of a subject, in [0.5, 1]; fixed by (subject id, seed).
inline std::vector<double> channel_signature(int subject_id, std::uint64_t seed, int channels) {
  NoiseStream rng(seed, "scene/signature/" + std::to_string(subject_id));
  std::vector<double> g(static_cast<std::size_t>(channels));
  for (double& v : g) v = rng.uniform(0.5, 1.0);
  return g;
}

namespace detail {

inline double wrapped_offset(double d, double period) { return d - period * std::round(d / period); }

}  // namespace detail

inline void validate_scene(const SceneSpec& spec) {
  if (spec.shape.c < 1 || spec.shape.h < 1 || spec.shape.w < 1) {
    throw ConfigError("scene.channels", "scene dimensions must be positive");
  }
  for (const auto& s : spec.subjects) {
    if (!(s.radius >= 1.0)) throw ConfigError("scene.subjects.radius", "blob radius must be >= 1 cell");
  }
  if (!(spec.sigma_d > 0.0)) throw ConfigError("scene.sigma_d", "must be > 0");
}

inline RenderedFrame render_frame(const SceneSpec& spec, long frame_index) {
  validate_scene(spec);
  if (frame_index < 0) throw DimensionError("render_frame: negative frame index");
  RenderedFrame out{Grid(spec.shape, spec.background), Mask(spec.shape.h, spec.shape.w)};
  const double H = spec.shape.h;
  const double W = spec.shape.w;
  for (const auto& s : spec.subjects) {
    const auto gain = channel_signature(s.id, spec.seed, spec.shape.c);
    const double cy = std::fmod(s.position[0] + s.velocity[0] * static_cast<double>(frame_index), H);
    const double cx = std::fmod(s.position[1] + s.velocity[1] * static_cast<double>(frame_index), W);
    for (int y = 0; y < spec.shape.h; ++y) {
      const double dy = detail::wrapped_offset(y - cy, H);
      for (int x = 0; x < spec.shape.w; ++x) {
        const double dx = detail::wrapped_offset(x - cx, W);
        const double dist = std::sqrt(dy * dy + dx * dx);
        if (dist >= s.radius) continue;
        const double bump = 0.5 * (1.0 + std::cos(std::numbers::pi * dist / s.radius));
        for (int ch = 0; ch < spec.shape.c; ++ch) {
          out.latent(ch, y, x) += s.amplitude * gain[static_cast<std::size_t>(ch)] * bump;
        }
        out.subject_mask(y, x) = 1;
      }
    }
  }
  return out;
}

// Stand-in for a text encoder: every subject id maps to a fixed unit vector.
struct ConditionEmbedding {
  Matrix tokens;  // [s, d]
  std::vector<int> subject_token_rows;
  std::vector<int> subject_ids;
};

inline ConditionEmbedding make_condition(const std::vector<int>& subject_ids, std::uint64_t seed, int d) {
  if (d < 1) throw ConfigError("model.token_width", "must be positive");
  ConditionEmbedding c{Matrix(static_cast<Eigen::Index>(subject_ids.size()), d), {}, subject_ids};
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    NoiseStream rng(seed, "condition/" + std::to_string(subject_ids[i]));
    Vector v(d);
    for (int j = 0; j < d; ++j) v(j) = rng.normal();
    c.tokens.row(static_cast<Eigen::Index>(i)) = v.normalized().transpose();
    c.subject_token_rows.push_back(static_cast<int>(i));
  }
  return c;
}

// Exact noise prediction for a Gaussian data prior x0 ~ N(mu, sigma_d^2 I).
inline Grid analytic_gaussian_epsilon(const Grid& z_t, int t, const Grid& mu, double sigma_d,
                                      const NoiseSchedule& sched) {
  if (!(sigma_d > 0.0)) throw ConfigError("scene.sigma_d", "must be > 0");
  z_t.require_same_shape(mu, "analytic_gaussian_epsilon");
  if (t < 1) throw TimestepError("analytic_gaussian_epsilon needs t >= 1");
  const double ab = sched.alpha_bar(t);
  const double sab = std::sqrt(ab);
  const double var = sigma_d * sigma_d;
  const double gain = sab * var / (ab * var + 1.0 - ab);
  const double inv_noise = 1.0 / std::sqrt(1.0 - ab);
  Grid eps(z_t.shape());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double m = mu[i] + gain * (z_t[i] - sab * mu[i]);
    eps[i] = (z_t[i] - sab * m) * inv_noise;
  }
  return eps;
}

}  // namespace ouro

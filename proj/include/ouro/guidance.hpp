#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ouro/attention.hpp"
#include "ouro/patch.hpp"
#include "ouro/queue.hpp"
#include "ouro/schedule.hpp"

namespace ouro {

// Long-term subject key memory: a fixed budget of m rows, updated by EMA.
struct SubjectBank {
  Matrix k_ltm;
  double lambda = 0.98;
  bool initialized = false;
  std::string diagnostic;

  Eigen::Index rows() const noexcept { return k_ltm.rows(); }
};

struct GuidanceConfig {
  double gamma0 = 0.05;
  int head_span = 16;
  int tail_span = 16;
};

// The linear map latent -> subject keys used by guidance:
// keys = patchify(z) * embed * key.
struct KeyProjection {
  int channels = 0;
  int patch = 0;
  Matrix embed;  // [c*p*p, d]
  Matrix key;    // [d, d]

  Matrix combined() const { return embed * key; }
};

// m x n averaging operator mapping n pooled rows onto the m-row bank layout.
// n >= m: m contiguous groups of (near) equal occupancy, each averaged.
// n < m: the n rows verbatim, then the mean row repeated.
inline Matrix reduction_operator(Eigen::Index n, Eigen::Index m) {
  if (n < 1 || m < 1) throw DimensionError("reduction needs at least one row and one slot");
  Matrix g = Matrix::Zero(m, n);
  if (n >= m) {
    for (Eigen::Index grp = 0; grp < m; ++grp) {
      const Eigen::Index begin = grp * n / m;
      const Eigen::Index end = (grp + 1) * n / m;
      const double w = 1.0 / static_cast<double>(end - begin);
      for (Eigen::Index j = begin; j < end; ++j) g(grp, j) = w;
    }
  } else {
    for (Eigen::Index j = 0; j < n; ++j) g(j, j) = 1.0;
    for (Eigen::Index r = n; r < m; ++r) g.row(r).setConstant(1.0 / static_cast<double>(n));
  }
  return g;
}

inline Matrix reduce_rows(const Matrix& rows, Eigen::Index m) {
  return reduction_operator(rows.rows(), m) * rows;
}

inline SubjectBank init_bank(std::span<const AttentionCapture> captures, Eigen::Index m, double lambda) {
  SubjectBank bank;
  bank.lambda = lambda;
  Eigen::Index total = 0;
  Eigen::Index d = 0;
  for (const auto& c : captures) {
    total += c.masked_keys.rows();
    if (c.masked_keys.rows() > 0) d = c.masked_keys.width();
  }
  if (total == 0) {
    bank.diagnostic = "no subject-masked keys in the head captures; guidance disabled";
    return bank;
  }
  Matrix pooled(total, d);
  Eigen::Index r = 0;
  for (const auto& c : captures) {
    if (c.masked_keys.rows() == 0) continue;
    pooled.middleRows(r, c.masked_keys.rows()) = c.masked_keys.tokens;
    r += c.masked_keys.rows();
  }
  bank.k_ltm = reduce_rows(pooled, m);
  bank.initialized = true;
  return bank;
}

// k_ltm <- lambda * k_ltm + (1 - lambda)/f * sum_t reduce(K'_t). Captures with
// empty masks do not contribute and f counts the contributing ones.
inline SubjectBank update_bank(SubjectBank bank, std::span<const AttentionCapture> current) {
  if (!bank.initialized) throw StateError("update_bank on an uninitialized subject bank");
  Matrix sum = Matrix::Zero(bank.k_ltm.rows(), bank.k_ltm.cols());
  int used = 0;
  for (const auto& c : current) {
    if (c.masked_keys.rows() == 0) continue;
    if (c.masked_keys.width() != bank.k_ltm.cols()) throw DimensionError("update_bank: key width mismatch");
    sum += reduce_rows(c.masked_keys.tokens, bank.k_ltm.rows());
    ++used;
  }
  if (used == 0) return bank;
  bank.k_ltm = bank.lambda * bank.k_ltm + ((1.0 - bank.lambda) / used) * sum;
  return bank;
}

// L(z) = || k_ltm - reduce(K'(z)) ||_F^2 with the subject mask held fixed.
inline double guidance_loss(const Grid& z, const Mask& mask, const SubjectBank& bank,
                            const KeyProjection& proj) {
  if (!bank.initialized) throw StateError("guidance_loss on an uninitialized subject bank");
  if (mask.empty()) return 0.0;
  const TokenMatrix patches = patchify(z, proj.patch);
  const TokenMatrix keys{patches.tokens * proj.combined()};
  const Matrix masked = select_rows(keys, mask).tokens;
  return (bank.k_ltm - reduce_rows(masked, bank.rows())).squaredNorm();
}

inline Grid guidance_gradient(const Grid& z, const Mask& mask, const SubjectBank& bank,
                              const KeyProjection& proj) {
  if (!bank.initialized) throw StateError("guidance_gradient on an uninitialized subject bank");
  if (mask.empty()) return Grid(z.shape());
  const Matrix w = proj.combined();
  const TokenMatrix patches = patchify(z, proj.patch);
  const TokenMatrix keys{patches.tokens * w};
  const Matrix masked = select_rows(keys, mask).tokens;
  const Matrix g = reduction_operator(masked.rows(), bank.rows());
  const Matrix residual = bank.k_ltm - g * masked;
  const Matrix d_keys = -2.0 * g.transpose() * residual;  // [n_masked, d]
  const Matrix d_patches = d_keys * w.transpose();        // [n_masked, c*p*p]

  Matrix full = Matrix::Zero(patches.rows(), patches.width());
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) full.row(static_cast<Eigen::Index>(i)) = d_patches.row(r++);
  }
  return unpatchify(full, z.shape(), proj.patch);
}

inline double guidance_strength(int t, const GuidanceConfig& cfg, const NoiseSchedule& sched) {
  return cfg.gamma0 * std::sqrt(1.0 - sched.alpha_bar(t));
}

inline FrameLatent apply_guidance(FrameLatent z, const Grid& grad, int t, const GuidanceConfig& cfg,
                                  const NoiseSchedule& sched) {
  z.data.require_same_shape(grad, "apply_guidance");
  const double gamma = guidance_strength(t, cfg, sched);
  if (gamma == 0.0) return z;
  auto dst = z.data.values();
  const auto src = grad.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= gamma * src[i];
  return z;
}

}  // namespace ouro

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ouro/attention.hpp"
#include "ouro/guidance.hpp"
#include "ouro/patch.hpp"
#include "ouro/rng.hpp"
#include "ouro/scene.hpp"
#include "ouro/schedule.hpp"

namespace ouro {

inline constexpr const char* kSiteCross = "cross";
inline constexpr const char* kSiteCrossPooled = "cross_pooled";

struct ToyConfig {
  int channels = 4;
  int patch = 4;
  int token_width = 32;
  double residual_scale = 0.25;  // weight of the attention head on top of the prior path
  double time_embed_scale = 0.5;
  double saliency = 4.0;         // text/patch alignment strength of the cross-attention
  std::vector<std::string> capture_sites{kSiteCross, kSiteCrossPooled};
};

struct DenoiseRequest {
  std::span<const Grid> latents;
  std::span<const int> timesteps;
  // Optional Gaussian prior means, one per latent; empty disables the prior path.
  std::span<const Grid> prior_means;
  double prior_sigma = 0.5;
  const NoiseSchedule* schedule = nullptr;  // required by the prior path
  const MaskedKeyValues* references = nullptr;  // SACFA keys/values, may be null
};

struct DenoiseOutput {
  std::vector<Grid> eps;
  std::vector<AttentionCapture> captures;
};

// Fixed, untrained attention denoiser:
//   patchify -> +time embedding -> self-attention (vanilla or SACFA)
//   -> cross-attention on [null; condition] -> linear head on the attention
//   increments -> unpatchify.
// Keys are projected from the time-free patch embedding so that the subject
// keys of frames at different noise levels live in one space. The cross
// attention aligns a patch-mean saliency feature with every subject token, so
// subject maps light up on bright blobs the way a trained text/image alignment
// would.
class ToyDenoiser {
 public:
  ToyDenoiser(ToyConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    const int d = cfg_.token_width;
    const int in = cfg_.channels * cfg_.patch * cfg_.patch;
    if (d < 2 + cfg_.channels || d > in + 1) {
      throw ConfigError("model.token_width", "must lie in [channels + 2, channels * patch^2 + 1]");
    }
    if (cfg_.patch < 1) throw ConfigError("model.patch", "must be positive");
    for (const auto& s : cfg_.capture_sites) {
      if (s != kSiteCross && s != kSiteCrossPooled) throw ConfigError("sacfa.capture_sites", "unknown site " + s);
    }
    NoiseStream rng(seed, "toy/weights");
    auto gaussian = [&](int r, int c, double scale) {
      Matrix m(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
      return m;
    };
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    embed_ = patch_embedding(rng, in, d);
    wq_ = gaussian(d, d, sd);
    wk_ = orthonormal_columns(gaussian(d, d, 1.0));
    wv_ = gaussian(d, d, sd);
    wo_ = gaussian(d, d, sd);

    Vector u = gaussian(d, 1, 1.0).col(0).normalized();
    wqc_ = gaussian(d, d, 0.1 * sd);
    wqc_.row(0) = cfg_.saliency * u.transpose();
    wkc_ = gaussian(d, d, sd);
    key_bias_ = cfg_.saliency * u;
    Vector null_key = gaussian(d, 1, sd).col(0);
    null_key_ = null_key - null_key.dot(u) * u;
    null_value_ = gaussian(d, 1, sd).col(0);
    wvc_ = gaussian(d, d, sd);
    woc_ = gaussian(d, d, sd);
    head_ = gaussian(d, in, sd);
  }

  const ToyConfig& config() const noexcept { return cfg_; }
  KeyProjection key_projection() const { return KeyProjection{cfg_.channels, cfg_.patch, embed_, wk_}; }

  Vector time_embedding(int t) const {
    const int d = cfg_.token_width;
    Vector e = Vector::Zero(d);
    for (int i = 1; i < d; ++i) {
      const int pair = (i - 1) / 2;
      const double freq = std::pow(10000.0, -2.0 * pair / static_cast<double>(d));
      e(i) = cfg_.time_embed_scale * (((i - 1) % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq));
    }
    return e;
  }

  DenoiseOutput forward(const DenoiseRequest& req, const ConditionEmbedding& cond) const {
    if (req.latents.size() != req.timesteps.size()) {
      throw DimensionError("toy denoiser: " + std::to_string(req.latents.size()) + " latents but " +
                           std::to_string(req.timesteps.size()) + " timesteps");
    }
    if (!req.prior_means.empty() && req.prior_means.size() != req.latents.size()) {
      throw DimensionError("toy denoiser: prior means do not match the window");
    }
    if (!req.prior_means.empty() && req.schedule == nullptr) {
      throw StateError("toy denoiser: prior path needs a noise schedule");
    }
    if (cond.tokens.rows() > 0 && cond.tokens.cols() != cfg_.token_width) {
      throw DimensionError("toy denoiser: condition width does not match the model");
    }
    const ConditionKeys ck = condition_keys(cond);
    DenoiseOutput out;
    out.eps.reserve(req.latents.size());
    out.captures.reserve(req.latents.size());
    for (std::size_t i = 0; i < req.latents.size(); ++i) {
      const Grid* mu = req.prior_means.empty() ? nullptr : &req.prior_means[i];
      auto [eps, cap] = forward_frame(req.latents[i], req.timesteps[i], ck, req.references, mu, req);
      out.eps.push_back(std::move(eps));
      out.captures.push_back(std::move(cap));
    }
    return out;
  }

 private:
  struct ConditionKeys {
    Matrix keys;    // [1 + s, d], row 0 is the null token
    Matrix values;  // [1 + s, d]
    std::vector<int> subject_cols;
  };

  ConditionKeys condition_keys(const ConditionEmbedding& cond) const {
    const Eigen::Index s = cond.tokens.rows();
    const int d = cfg_.token_width;
    ConditionKeys ck{Matrix(1 + s, d), Matrix(1 + s, d), {}};
    ck.keys.row(0) = null_key_.transpose();
    ck.values.row(0) = null_value_.transpose();
    if (s > 0) {
      ck.keys.bottomRows(s) = (cond.tokens * wkc_).rowwise() + key_bias_.transpose();
      ck.values.bottomRows(s) = cond.tokens * wvc_;
    }
    for (int r : cond.subject_token_rows) ck.subject_cols.push_back(1 + r);
    return ck;
  }

  static Matrix orthonormal_columns(const Matrix& a) {
    Eigen::HouseholderQR<Matrix> qr(a);
    return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  }

  // Feature 0 is the patch mean, features 1..c are unit-norm per-channel means
  // and the rest are random orthonormal directions orthogonal to those, so the
  // key path has singular values close to 1.
  Matrix patch_embedding(NoiseStream& rng, int in, int d) const {
    const int c = cfg_.channels;
    const int pp = cfg_.patch * cfg_.patch;
    Matrix e = Matrix::Zero(in, d);
    e.col(0).setConstant(1.0 / in);
    for (int ch = 0; ch < c; ++ch) e.block(ch * pp, 1 + ch, pp, 1).setConstant(1.0 / cfg_.patch);
    const int extra = d - 1 - c;
    if (extra > 0) {
      Matrix r(in, extra);
      for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();
      for (int ch = 0; ch < c; ++ch) {
        auto block = r.middleRows(ch * pp, pp);
        block.rowwise() -= block.colwise().mean();
      }
      e.rightCols(extra) = orthonormal_columns(r);
    }
    return e;
  }

  static Vector smooth3x3(const Vector& v, int gh, int gw) {
    Vector out(v.size());
    for (int y = 0; y < gh; ++y) {
      for (int x = 0; x < gw; ++x) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            s += (2 - std::abs(dy)) * (2 - std::abs(dx)) * v(((y + dy + gh) % gh) * gw + (x + dx + gw) % gw);
          }
        }
        out(y * gw + x) = s / 16.0;
      }
    }
    return out;
  }

  static Matrix pool2x2(const TokenMatrix& q) {
    const int gh = q.grid_h / 2;
    const int gw = q.grid_w / 2;
    Matrix out(gh * gw, q.width());
    for (int y = 0; y < gh; ++y) {
      for (int x = 0; x < gw; ++x) {
        const auto at = [&](int yy, int xx) { return q.tokens.row(static_cast<Eigen::Index>(yy) * q.grid_w + xx); };
        out.row(y * gw + x) = 0.25 * (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) +
                                      at(2 * y + 1, 2 * x + 1));
      }
    }
    return out;
  }

  std::pair<Grid, AttentionCapture> forward_frame(const Grid& z, int t, const ConditionKeys& ck,
                                                  const MaskedKeyValues* refs, const Grid* mu,
                                                  const DenoiseRequest& req) const {
    if (z.channels() != cfg_.channels) throw DimensionError("toy denoiser: channel count mismatch");
    const TokenMatrix patches = patchify(z, cfg_.patch);
    const int gh = patches.grid_h;
    const int gw = patches.grid_w;

    const Matrix content = patches.tokens * embed_;
    const Matrix x = content.rowwise() + time_embedding(t).transpose();

    // With a prior the model has its own clean estimate x0_hat; the subject
    // saliency is read from that estimate instead of the noisy latent.
    Grid prior_eps;
    Vector saliency = content.col(0);
    if (mu != nullptr) {
      prior_eps = analytic_gaussian_epsilon(z, t, *mu, req.prior_sigma, *req.schedule);
      saliency = patchify(predict_x0(z, prior_eps, t, *req.schedule), cfg_.patch).tokens * embed_.col(0);
    }

    AttentionCapture cap;
    cap.q = TokenMatrix{x * wq_, gh, gw};
    cap.k = TokenMatrix{content * wk_, gh, gw};
    cap.v = TokenMatrix{x * wv_, gh, gw};

    TokenMatrix self;
    if (refs != nullptr) {
      self = sacfa_attention(cap.q, cap.k, cap.v, refs->keys, refs->values);
    } else {
      self = TokenMatrix{attention(cap.q.tokens, cap.k.tokens, cap.v.tokens), gh, gw};
    }
    const Matrix self_out = self.tokens * wo_;
    const Matrix x1 = x + self_out;

    // The cross-attention sees the saliency smoothed by a [1 2 1]^2 kernel
    // over the token grid (toroidal), a wider receptive field than one patch.
    Matrix x1c = x1;
    x1c.col(0) = smooth3x3(saliency, gh, gw);
    const TokenMatrix qc{x1c * wqc_, gh, gw};
    const Matrix probs = attention_weights(qc.tokens, ck.keys);
    const Matrix cross_out = probs * ck.values * woc_;

    std::vector<Matrix> maps;
    if (!ck.subject_cols.empty()) {
      for (const auto& site : cfg_.capture_sites) {
        Matrix m;
        if (site == kSiteCross) {
          m = cross_attention_maps(qc, ck.keys, ck.subject_cols);
        } else if (gh >= 2 && gw >= 2 && gh % 2 == 0 && gw % 2 == 0) {
          m = cross_attention_maps(TokenMatrix{pool2x2(qc), gh / 2, gw / 2}, ck.keys, ck.subject_cols);
        } else {
          continue;
        }
        maps.push_back(m);
        cap.cross_maps.push_back(CaptureMap{site, std::move(m)});
      }
    }
    cap.subject_mask = build_subject_mask(maps);
    if (cap.subject_mask.mask.bits.empty()) cap.subject_mask.mask = Mask(gh, gw);
    cap.masked_keys = select_rows(cap.k, cap.subject_mask.mask);

    const Matrix residual_tokens = (self_out + cross_out) * head_;
    Grid eps = unpatchify(residual_tokens, z.shape(), cfg_.patch);
    eps *= cfg_.residual_scale;
    if (mu != nullptr) eps += prior_eps;
    return {std::move(eps), std::move(cap)};
  }

  ToyConfig cfg_;
  Matrix embed_, wq_, wk_, wv_, wo_;
  Matrix wqc_, wkc_, wvc_, woc_, head_;
  Vector key_bias_, null_key_, null_value_;
};

}  // namespace ouro

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ouro/grid.hpp"

namespace ouro {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// n tokens of width d. Spatial token sets also carry their grid layout.
struct TokenMatrix {
  Matrix tokens;
  int grid_h = 0;
  int grid_w = 0;

  Eigen::Index rows() const noexcept { return tokens.rows(); }
  Eigen::Index width() const noexcept { return tokens.cols(); }
  bool spatial() const noexcept { return grid_h > 0 && grid_w > 0 && grid_h * grid_w == tokens.rows(); }
};

struct SubjectMask {
  Mask mask;
  bool degenerate = false;  // every capture site was flat; mask is empty
};

// One subject attention map captured at a cross-attention site.
struct CaptureMap {
  std::string site;
  Matrix map;  // [h', w']
};

struct AttentionCapture {
  TokenMatrix q;
  TokenMatrix k;
  TokenMatrix v;
  std::vector<CaptureMap> cross_maps;
  SubjectMask subject_mask;
  TokenMatrix masked_keys;  // rows of k where subject_mask == 1, raster order
};

inline void softmax_rows_inplace(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

inline Matrix attention_weights(const Matrix& q, const Matrix& k) {
  if (q.cols() != k.cols()) {
    throw DimensionError("attention: query width " + std::to_string(q.cols()) + " != key width " +
                         std::to_string(k.cols()));
  }
  Matrix s = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  softmax_rows_inplace(s);
  return s;
}

inline Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (k.rows() != v.rows() || k.rows() == 0) throw DimensionError("attention: keys and values disagree");
  return attention_weights(q, k) * v;
}

// Softmax over all keys, then the mean probability mass on subject_cols,
// laid out on q's token grid.
inline Matrix cross_attention_maps(const TokenMatrix& q, const Matrix& keys,
                                   const std::vector<int>& subject_cols) {
  if (!q.spatial()) throw DimensionError("cross_attention_maps: queries carry no spatial layout");
  if (subject_cols.empty() || keys.rows() == 0) {
    throw DimensionError("cross_attention_maps: no subject tokens");
  }
  const Matrix probs = attention_weights(q.tokens, keys);
  Matrix map(q.grid_h, q.grid_w);
  for (int y = 0; y < q.grid_h; ++y) {
    for (int x = 0; x < q.grid_w; ++x) {
      const Eigen::Index row = static_cast<Eigen::Index>(y) * q.grid_w + x;
      double s = 0.0;
      for (int col : subject_cols) s += probs(row, col);
      map(y, x) = s / static_cast<double>(subject_cols.size());
    }
  }
  return map;
}

// Softmax restricted to the subject keys themselves.
inline Matrix cross_attention_maps(const TokenMatrix& q, const TokenMatrix& k_subj) {
  std::vector<int> cols(static_cast<std::size_t>(k_subj.rows()));
  for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = static_cast<int>(i);
  return cross_attention_maps(q, k_subj.tokens, cols);
}

constexpr int kOtsuBins = 256;

// Histogram split chosen by Otsu's method. Values whose bin index is >= edge
// belong to the upper (foreground) class.
struct OtsuSplit {
  double lo = 0.0;
  double bin_width = 0.0;
  int edge = 0;  // 1..255
  double threshold = 0.0;

  int bin(double v) const {
    const int b = static_cast<int>(std::floor((v - lo) / bin_width));
    return std::clamp(b, 0, kOtsuBins - 1);
  }
  bool upper(double v) const { return bin(v) >= edge; }
};

inline OtsuSplit otsu_split(std::span<const double> values) {
  if (values.empty()) throw DegenerateInputError("otsu: no values");
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn_it;
  const double hi = *mx_it;
  if (!(hi > lo)) throw DegenerateInputError("otsu: all values equal");

  OtsuSplit split;
  split.lo = lo;
  split.bin_width = (hi - lo) / kOtsuBins;

  std::vector<double> hist(kOtsuBins, 0.0);
  for (double v : values) hist[static_cast<std::size_t>(split.bin(v))] += 1.0;
  const double n = static_cast<double>(values.size());

  double total_mean = 0.0;
  for (int b = 0; b < kOtsuBins; ++b) total_mean += hist[b] / n * (lo + (b + 0.5) * split.bin_width);

  double omega = 0.0;
  double mu = 0.0;
  double best = -1.0;
  for (int k = 1; k < kOtsuBins; ++k) {
    const double p = hist[static_cast<std::size_t>(k - 1)] / n;
    omega += p;
    mu += p * (lo + (k - 0.5) * split.bin_width);
    double between = 0.0;
    if (omega > 0.0 && omega < 1.0) {
      const double d = total_mean * omega - mu;
      between = d * d / (omega * (1.0 - omega));
    }
    if (between > best) {
      best = between;
      split.edge = k;
    }
  }
  split.threshold = lo + split.edge * split.bin_width;
  return split;
}

inline double otsu_threshold(std::span<const double> values) { return otsu_split(values).threshold; }

namespace detail {

// Half-pixel-centred bilinear resampling.
inline Matrix resize_bilinear(const Matrix& src, int out_h, int out_w) {
  const auto in_h = static_cast<int>(src.rows());
  const auto in_w = static_cast<int>(src.cols());
  if (in_h == out_h && in_w == out_w) return src;
  Matrix out(out_h, out_w);
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      out(y, x) = (1 - wy) * ((1 - wx) * src(y0, x0) + wx * src(y0, x1)) +
                  wy * ((1 - wx) * src(y1, x0) + wx * src(y1, x1));
    }
  }
  return out;
}

}  // namespace detail

// Binarizes each map with Otsu, resamples to the largest resolution, averages
// and re-binarizes at 0.5 (ties go to the subject).
inline SubjectMask build_subject_mask(const std::vector<Matrix>& maps) {
  if (maps.empty()) return SubjectMask{Mask(), true};
  int th = 0;
  int tw = 0;
  for (const auto& m : maps) {
    if (m.rows() * m.cols() > static_cast<Eigen::Index>(th) * tw) {
      th = static_cast<int>(m.rows());
      tw = static_cast<int>(m.cols());
    }
  }
  std::vector<Matrix> resampled;
  for (const auto& m : maps) {
    OtsuSplit split;
    try {
      split = otsu_split(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
    } catch (const DegenerateInputError&) {
      continue;
    }
    Matrix bin(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) bin.data()[i] = split.upper(m.data()[i]) ? 1.0 : 0.0;
    resampled.push_back(detail::resize_bilinear(bin, th, tw));
  }
  SubjectMask out{Mask(th, tw), resampled.empty()};
  if (resampled.empty()) return out;
  std::vector<double> cell(resampled.size());
  for (int y = 0; y < th; ++y) {
    for (int x = 0; x < tw; ++x) {
      for (std::size_t i = 0; i < resampled.size(); ++i) cell[i] = resampled[i](y, x);
      // Summation order fixed by value so the result ignores input order.
      std::sort(cell.begin(), cell.end());
      double s = 0.0;
      for (double v : cell) s += v;
      out.mask(y, x) = (s / static_cast<double>(cell.size()) >= 0.5) ? 1 : 0;
    }
  }
  return out;
}

inline TokenMatrix select_rows(const TokenMatrix& m, const Mask& mask) {
  if (static_cast<Eigen::Index>(mask.bits.size()) != m.rows()) {
    throw DimensionError("mask of " + std::to_string(mask.bits.size()) + " cells does not match " +
                         std::to_string(m.rows()) + " tokens");
  }
  TokenMatrix out{Matrix(static_cast<Eigen::Index>(mask.popcount()), m.width())};
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) out.tokens.row(r++) = m.tokens.row(static_cast<Eigen::Index>(i));
  }
  return out;
}

struct MaskedKeyValues {
  TokenMatrix keys;
  TokenMatrix values;
  bool empty() const noexcept { return keys.rows() == 0; }
};

struct MaskedFrame {
  const TokenMatrix* k;
  const TokenMatrix* v;
  const Mask* mask;
};

// Subject rows of every frame, concatenated in frame order then raster order.
inline MaskedKeyValues collect_masked_kv(const std::vector<MaskedFrame>& frames) {
  Eigen::Index total = 0;
  Eigen::Index d = -1;
  for (const auto& f : frames) {
    if (f.k->rows() != f.v->rows()) throw DimensionError("collect_masked_kv: K/V row mismatch");
    if (static_cast<Eigen::Index>(f.mask->bits.size()) != f.k->rows()) {
      throw DimensionError("collect_masked_kv: mask does not match the token grid");
    }
    if (d >= 0 && (f.k->width() != d || f.v->width() != d)) {
      throw DimensionError("collect_masked_kv: token widths differ across frames");
    }
    d = f.k->width();
    total += static_cast<Eigen::Index>(f.mask->popcount());
  }
  MaskedKeyValues out;
  out.keys.tokens.resize(total, std::max<Eigen::Index>(d, 0));
  out.values.tokens.resize(total, std::max<Eigen::Index>(d, 0));
  Eigen::Index r = 0;
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < f.mask->bits.size(); ++i) {
      if (!f.mask->bits[i]) continue;
      out.keys.tokens.row(r) = f.k->tokens.row(static_cast<Eigen::Index>(i));
      out.values.tokens.row(r) = f.v->tokens.row(static_cast<Eigen::Index>(i));
      ++r;
    }
  }
  return out;
}

// Self-attention of frame i extended with cross-frame subject references.
// Empty references reduce to vanilla self-attention.
inline TokenMatrix sacfa_attention(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v,
                                   const TokenMatrix& k_ref, const TokenMatrix& v_ref) {
  TokenMatrix out{Matrix(), q.grid_h, q.grid_w};
  if (k_ref.rows() == 0) {
    out.tokens = attention(q.tokens, k.tokens, v.tokens);
    return out;
  }
  if (k_ref.width() != k.width() || v_ref.width() != v.width() || k_ref.rows() != v_ref.rows()) {
    throw DimensionError("sacfa_attention: reference keys/values do not match the frame");
  }
  Matrix keys(k.rows() + k_ref.rows(), k.width());
  keys << k.tokens, k_ref.tokens;
  Matrix values(v.rows() + v_ref.rows(), v.width());
  values << v.tokens, v_ref.tokens;
  out.tokens = attention(q.tokens, keys, values);
  return out;
}

}  // namespace ouro

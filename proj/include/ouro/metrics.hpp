#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ouro/freq.hpp"
#include "ouro/grid.hpp"

namespace ouro {

// Proxy consistency scores for a generated latent video. motion_smoothness and
// temporal_flicker are raw magnitudes (lower is better); the CSV reports them
// negated so that every column reads "higher is better". A score that the
// video cannot support (e.g. no subject in any frame) is NaN.
struct MetricsReport {
  double subject_consistency = std::numeric_limits<double>::quiet_NaN();
  double background_consistency = std::numeric_limits<double>::quiet_NaN();
  double motion_smoothness = std::numeric_limits<double>::quiet_NaN();
  double temporal_flicker = std::numeric_limits<double>::quiet_NaN();
  double lowfreq_coherence = std::numeric_limits<double>::quiet_NaN();
  long n_frames = 0;
};

// Cosine similarity with 0/0 treated as identical and x/0 as unrelated.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(squared_norm(a));
  const double nb = std::sqrt(squared_norm(b));
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// Per-channel mean over the masked cells; empty when the mask is empty.
inline std::vector<double> masked_descriptor(const Grid& frame, const Mask& mask) {
  if (mask.h != frame.height() || mask.w != frame.width()) {
    throw DimensionError("metric mask does not match the frame");
  }
  const auto count = static_cast<double>(mask.popcount());
  if (count == 0.0) return {};
  std::vector<double> desc(static_cast<std::size_t>(frame.channels()), 0.0);
  for (int ch = 0; ch < frame.channels(); ++ch) {
    const auto plane = frame.channel(ch);
    double s = 0.0;
    for (std::size_t i = 0; i < plane.size(); ++i) s += mask.bits[i] ? plane[i] : 0.0;
    desc[static_cast<std::size_t>(ch)] = s / count;
  }
  return desc;
}

// All channels of the cells outside both masks, flattened, so that two frames
// with a moving subject are compared on the same cells.
inline std::vector<double> background_vector(const Grid& frame, const Mask& mask, const Mask& other) {
  std::vector<double> out;
  for (int ch = 0; ch < frame.channels(); ++ch) {
    const auto plane = frame.channel(ch);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      if (!mask.bits[i] && !other.bits[i]) out.push_back(plane[i]);
    }
  }
  return out;
}

// Streaming evaluation: holds only the last two frames plus running sums, so
// long generations are scored without keeping the video in memory.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(double low_pass_r) : r_(low_pass_r) {}

  void push(const Grid& frame, const Mask& mask) {
    if (!frame.all_finite()) throw NumericalError(n_, "non-finite frame passed to metrics");
    auto desc = masked_descriptor(frame, mask);
    Grid low = low_pass(frame, r_);
    if (prev_) {
      const Grid& p = *prev_;
      frame.require_same_shape(p, "metrics");
      if (!desc.empty() && !prev_desc_.empty()) {
        subject_.add(cosine(desc, prev_desc_));
      }
      const auto bg = background_vector(frame, mask, prev_mask_);
      if (!bg.empty()) background_.add(cosine(bg, background_vector(p, prev_mask_, mask)));
      double abs_sum = 0.0;
      for (std::size_t i = 0; i < frame.size(); ++i) abs_sum += std::abs(frame[i] - p[i]);
      flicker_.add(abs_sum / static_cast<double>(frame.size()));
      lowfreq_.add(cosine(low.values(), prev_low_.values()));
      if (prev2_) {
        const Grid& q = *prev2_;
        double sq = 0.0;
        for (std::size_t i = 0; i < frame.size(); ++i) {
          const double d2 = frame[i] - 2.0 * p[i] + q[i];
          sq += d2 * d2;
        }
        smooth_.add(std::sqrt(sq));
      }
    }
    prev2_ = std::move(prev_);
    prev_ = frame;
    prev_desc_ = std::move(desc);
    prev_mask_ = mask;
    prev_low_ = std::move(low);
    ++n_;
  }

  long frames() const noexcept { return n_; }
  std::optional<double> subject_consistency() const { return subject_.mean(); }
  std::optional<double> background_consistency() const { return background_.mean(); }
  std::optional<double> temporal_flicker() const { return flicker_.mean(); }
  std::optional<double> motion_smoothness() const { return smooth_.mean(); }
  std::optional<double> lowfreq_coherence() const { return lowfreq_.mean(); }

  MetricsReport report() const {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    MetricsReport r;
    r.subject_consistency = subject_.mean().value_or(nan);
    r.background_consistency = background_.mean().value_or(nan);
    r.motion_smoothness = smooth_.mean().value_or(nan);
    r.temporal_flicker = flicker_.mean().value_or(nan);
    r.lowfreq_coherence = lowfreq_.mean().value_or(nan);
    r.n_frames = n_;
    return r;
  }

  std::size_t bytes() const noexcept {
    std::size_t n = (prev_desc_.size() + prev_low_.size()) * sizeof(double) + prev_mask_.bits.size();
    if (prev_) n += prev_->size() * sizeof(double);
    if (prev2_) n += prev2_->size() * sizeof(double);
    return n;
  }

 private:
  struct Mean {
    double sum = 0.0;
    long count = 0;
    void add(double v) {
      sum += v;
      ++count;
    }
    std::optional<double> mean() const {
      if (count == 0) return std::nullopt;
      return sum / static_cast<double>(count);
    }
  };

  double r_;
  long n_ = 0;
  std::optional<Grid> prev_, prev2_;
  std::vector<double> prev_desc_;
  Mask prev_mask_;
  Grid prev_low_;
  Mean subject_, background_, flicker_, smooth_, lowfreq_;
};

namespace detail {

inline std::vector<Mask> full_masks(const std::vector<Grid>& frames) {
  std::vector<Mask> m;
  for (const auto& f : frames) m.emplace_back(f.height(), f.width(), 0);
  return m;
}

inline MetricsAccumulator accumulate(const std::vector<Grid>& frames, const std::vector<Mask>& masks,
                                     double r) {
  if (masks.size() != frames.size()) throw DimensionError("metrics: one mask per frame required");
  MetricsAccumulator acc(r);
  for (std::size_t i = 0; i < frames.size(); ++i) acc.push(frames[i], masks[i]);
  return acc;
}

inline double require(std::optional<double> v, const char* metric) {
  if (!v) throw InsufficientDataError(std::string(metric) + ": not enough usable frames");
  return *v;
}

}  // namespace detail

inline double subject_consistency(const std::vector<Grid>& frames, const std::vector<Mask>& masks) {
  return detail::require(detail::accumulate(frames, masks, 0.25).subject_consistency(), "subject_consistency");
}

inline double background_consistency(const std::vector<Grid>& frames, const std::vector<Mask>& masks) {
  return detail::require(detail::accumulate(frames, masks, 0.25).background_consistency(),
                         "background_consistency");
}

inline double temporal_flicker(const std::vector<Grid>& frames) {
  return detail::require(detail::accumulate(frames, detail::full_masks(frames), 0.25).temporal_flicker(),
                         "temporal_flicker");
}

inline double motion_smoothness(const std::vector<Grid>& frames) {
  return detail::require(detail::accumulate(frames, detail::full_masks(frames), 0.25).motion_smoothness(),
                         "motion_smoothness");
}

inline double lowfreq_coherence(const std::vector<Grid>& frames, double r) {
  return detail::require(detail::accumulate(frames, detail::full_masks(frames), r).lowfreq_coherence(),
                         "lowfreq_coherence");
}

inline constexpr const char* kMetricsCsvHeader =
    "run_id,config_hash,subject_consistency,background_consistency,motion_smoothness,temporal_flicker,"
    "lowfreq_coherence,n_frames";

inline void write_metrics_row(std::ostream& os, const std::string& run_id, const std::string& config_hash,
                              const MetricsReport& m) {
  const auto old_precision = os.precision(10);
  os << run_id << ',' << config_hash << ',' << m.subject_consistency << ',' << m.background_consistency << ','
     << -m.motion_smoothness << ',' << -m.temporal_flicker << ',' << m.lowfreq_coherence << ',' << m.n_frames
     << '\n';
  os.precision(old_precision);
}

}  // namespace ouro

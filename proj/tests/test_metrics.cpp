#include <cmath>

#include <gtest/gtest.h>

#include "ouro/metrics.hpp"
#include "oracles.hpp"
#include "util.hpp"

using namespace ouro;

namespace {

// Frame whose masked cells hold a per-channel constant descriptor.
Grid frame_with_descriptor(const std::vector<double>& d, const Mask& m, double bg) {
  Grid g({static_cast<int>(d.size()), m.h, m.w}, bg);
  for (int ch = 0; ch < g.channels(); ++ch) {
    for (int y = 0; y < m.h; ++y) {
      for (int x = 0; x < m.w; ++x) {
        if (m(y, x)) g(ch, y, x) = d[static_cast<std::size_t>(ch)];
      }
    }
  }
  return g;
}

Mask block_mask(int h, int w, int y0, int x0, int size) {
  Mask m(h, w);
  for (int y = y0; y < y0 + size; ++y) {
    for (int x = x0; x < x0 + size; ++x) m(y, x) = 1;
  }
  return m;
}

double cos3(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / std::sqrt(na * nb);
}

}  // namespace

TEST(SubjectConsistency, IdenticalFramesScoreOne) {
  const Mask m = block_mask(6, 6, 1, 1, 3);
  const Grid f = testutil::random_grid({3, 6, 6}, 1);
  EXPECT_NEAR(subject_consistency({f, f, f}, {m, m, m}), 1.0, 1e-12);
}

TEST(SubjectConsistency, SignFlipScoresMinusOne) {
  const Mask m = block_mask(6, 6, 2, 2, 2);
  const Grid a = frame_with_descriptor({1.0, -2.0, 0.5}, m, 0.0);
  const Grid b = frame_with_descriptor({-1.0, 2.0, -0.5}, m, 0.0);
  EXPECT_NEAR(subject_consistency({a, b}, {m, m}), -1.0, 1e-12);
}

TEST(SubjectConsistency, HandComputedThreeFrames) {
  const std::vector<double> d0{1, 0, 0}, d1{1, 1, 0}, d2{0, 1, 1};
  const Mask m0 = block_mask(8, 8, 0, 0, 2);
  const Mask m1 = block_mask(8, 8, 3, 3, 3);
  const Mask m2 = block_mask(8, 8, 5, 1, 2);
  const std::vector frames{frame_with_descriptor(d0, m0, 7.0), frame_with_descriptor(d1, m1, 7.0),
                           frame_with_descriptor(d2, m2, 7.0)};
  // cos(d0,d1) = 1/sqrt2, cos(d1,d2) = 1/2
  EXPECT_NEAR(subject_consistency(frames, {m0, m1, m2}), 0.5 * (1.0 / std::sqrt(2.0) + 0.5), 1e-12);
}

TEST(SubjectConsistency, EmptyMasksAreSkippedOrUndefined) {
  const Mask e(4, 4);
  const Grid f = testutil::random_grid({2, 4, 4}, 2);
  EXPECT_THROW(subject_consistency({f, f}, {e, e}), InsufficientDataError);
  MetricsAccumulator acc(0.25);
  acc.push(f, e);
  acc.push(f, e);
  EXPECT_TRUE(std::isnan(acc.report().subject_consistency));
}

TEST(SubjectConsistency, ScaleInvariant) {
  const Mask m = block_mask(6, 6, 1, 2, 3);
  const Grid a = testutil::random_grid({3, 6, 6}, 3);
  const Grid b = testutil::random_grid({3, 6, 6}, 4);
  EXPECT_NEAR(subject_consistency({a, b}, {m, m}), subject_consistency({2.5 * a, 0.5 * b}, {m, m}), 1e-12);
}

TEST(BackgroundConsistency, ComparesCellsOutsideBothMasks) {
  const Mask m0 = block_mask(4, 4, 0, 0, 2);
  const Mask m1 = block_mask(4, 4, 1, 1, 2);
  const Grid a = testutil::random_grid({2, 4, 4}, 5);
  const Grid b = testutil::random_grid({2, 4, 4}, 6);
  std::vector<double> va, vb;
  for (int ch = 0; ch < 2; ++ch) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        if (m0(y, x) || m1(y, x)) continue;
        va.push_back(a(ch, y, x));
        vb.push_back(b(ch, y, x));
      }
    }
  }
  EXPECT_NEAR(background_consistency({a, b}, {m0, m1}), cos3(va, vb), 1e-12);
}

TEST(BackgroundConsistency, ReversalInvariant) {
  std::vector<Grid> f;
  std::vector<Mask> m;
  for (int i = 0; i < 5; ++i) {
    f.push_back(testutil::random_grid({2, 6, 6}, 10 + i));
    m.push_back(block_mask(6, 6, i % 3, (2 * i) % 4, 2));
  }
  const double fwd = background_consistency(f, m);
  std::reverse(f.begin(), f.end());
  std::reverse(m.begin(), m.end());
  EXPECT_NEAR(background_consistency(f, m), fwd, 1e-12);
}

TEST(Video, ConstantVideo) {
  const Grid c({2, 8, 8}, 0.7);
  const std::vector v{c, c, c, c};
  EXPECT_NEAR(temporal_flicker(v), 0.0, 1e-15);
  EXPECT_NEAR(motion_smoothness(v), 0.0, 1e-15);
  EXPECT_NEAR(lowfreq_coherence(v, 0.25), 1.0, 1e-12);
}

TEST(Video, LinearRamp) {
  const Grid g = testutil::random_grid({2, 5, 5}, 20);
  std::vector<Grid> v;
  for (int k = 0; k < 6; ++k) v.push_back(static_cast<double>(k) * g);
  double mean_abs = 0.0;
  for (double x : g.values()) mean_abs += std::abs(x) / static_cast<double>(g.size());
  EXPECT_NEAR(motion_smoothness(v), 0.0, 1e-12);
  EXPECT_NEAR(temporal_flicker(v), mean_abs, 1e-12);
}

TEST(Video, RandomFixtureMatchesScalarLoops) {
  std::vector<Grid> v;
  for (int k = 0; k < 5; ++k) v.push_back(testutil::random_grid({2, 6, 6}, 30 + k));
  double flicker = 0, smooth = 0, coh = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    double s = 0;
    for (std::size_t i = 0; i < v[k].size(); ++i) s += std::abs(v[k][i] - v[k - 1][i]);
    flicker += s / static_cast<double>(v[k].size()) / 4.0;
    const Grid a = oracle::low_pass(v[k], 0.5);
    const Grid b = oracle::low_pass(v[k - 1], 0.5);
    coh += cosine(a.values(), b.values()) / 4.0;
    if (k >= 2) {
      double sq = 0;
      for (std::size_t i = 0; i < v[k].size(); ++i) {
        const double d = v[k][i] - 2 * v[k - 1][i] + v[k - 2][i];
        sq += d * d;
      }
      smooth += std::sqrt(sq) / 3.0;
    }
  }
  EXPECT_NEAR(temporal_flicker(v), flicker, 1e-12);
  EXPECT_NEAR(motion_smoothness(v), smooth, 1e-12);
  EXPECT_NEAR(lowfreq_coherence(v, 0.5), coh, 1e-9);
}

TEST(Video, TooFewFramesThrow) {
  const Grid g({1, 2, 2});
  EXPECT_THROW(temporal_flicker({g}), InsufficientDataError);
  EXPECT_THROW(motion_smoothness({g, g}), InsufficientDataError);
}

TEST(Video, NonFiniteFrameThrows) {
  Grid g({1, 2, 2});
  g[1] = std::nan("");
  MetricsAccumulator acc(0.25);
  EXPECT_THROW(acc.push(g, Mask(2, 2)), NumericalError);
}

TEST(Csv, RowNegatesLowerIsBetterColumns) {
  MetricsReport r;
  r.subject_consistency = 0.9;
  r.background_consistency = 0.8;
  r.motion_smoothness = 1.5;
  r.temporal_flicker = 0.25;
  r.lowfreq_coherence = 0.7;
  r.n_frames = 12;
  std::ostringstream os;
  write_metrics_row(os, "x", "abc", r);
  EXPECT_EQ(os.str(), "x,abc,0.9,0.8,-1.5,-0.25,0.7,12\n");
  EXPECT_EQ(std::string(kMetricsCsvHeader).find("run_id,config_hash,"), 0u);
}

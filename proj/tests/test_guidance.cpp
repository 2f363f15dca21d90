#include <cmath>

#include <gtest/gtest.h>

#include "ouro/guidance.hpp"
#include "ouro/toy_denoiser.hpp"
#include "oracles.hpp"
#include "util.hpp"

using namespace ouro;

namespace {

AttentionCapture capture_with_keys(const Matrix& rows) { return AttentionCapture{{}, {}, {}, {}, {}, TokenMatrix{rows}}; }

Matrix rows_of(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST(Reduction, MoreRowsThanSlotsAveragesGroups) {
  const Matrix g = reduction_operator(5, 2);
  const Matrix expect = rows_of({{0.5, 0.5, 0, 0, 0}, {0, 0, 1.0 / 3, 1.0 / 3, 1.0 / 3}});
  EXPECT_LT((g - expect).cwiseAbs().maxCoeff(), 1e-15);
  for (Eigen::Index r = 0; r < g.rows(); ++r) EXPECT_NEAR(g.row(r).sum(), 1.0, 1e-15);
}

TEST(Reduction, FewerRowsPadsWithMean) {
  const Matrix g = reduction_operator(2, 4);
  const Matrix expect = rows_of({{1, 0}, {0, 1}, {0.5, 0.5}, {0.5, 0.5}});
  EXPECT_EQ(g, expect);
}

TEST(Reduction, LargestEigenvalueOfGram) {
  for (auto [n, m] : {std::pair{1, 16}, std::pair{3, 16}, std::pair{7, 4}}) {
    const Matrix g = reduction_operator(n, m);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(g.transpose() * g);
    const double expect = n < m ? 1.0 + static_cast<double>(m - n) / n : es.eigenvalues().maxCoeff();
    EXPECT_NEAR(es.eigenvalues().maxCoeff(), expect, 1e-12);
    if (n >= m) EXPECT_LE(es.eigenvalues().maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(Bank, ExactlyMRowsAreKept) {
  const Matrix k = rows_of({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<AttentionCapture> caps{capture_with_keys(k)};
  const auto bank = init_bank(caps, 3, 0.9);
  EXPECT_TRUE(bank.initialized);
  EXPECT_EQ(bank.k_ltm, k);
}

TEST(Bank, IdenticalKeysFillEveryRow) {
  const Matrix k = Matrix::Constant(5, 3, 0.25);
  const std::vector<AttentionCapture> caps{capture_with_keys(k.topRows(2)), capture_with_keys(k.bottomRows(3))};
  const auto bank = init_bank(caps, 4, 0.9);
  EXPECT_EQ(bank.k_ltm, Matrix::Constant(4, 3, 0.25));
}

TEST(Bank, TwoCapturesHandComputedGroups) {
  const std::vector<AttentionCapture> caps{capture_with_keys(rows_of({{1, 0}, {3, 2}})),
                                           capture_with_keys(rows_of({{5, 4}, {7, 6}}))};
  const auto bank = init_bank(caps, 2, 0.5);
  EXPECT_EQ(bank.k_ltm, rows_of({{2, 1}, {6, 5}}));
}

TEST(Bank, NoMaskedKeysLeavesBankUninitialized) {
  const std::vector<AttentionCapture> caps{capture_with_keys(Matrix(0, 3))};
  const auto bank = init_bank(caps, 4, 0.9);
  EXPECT_FALSE(bank.initialized);
  EXPECT_FALSE(bank.diagnostic.empty());
  EXPECT_THROW(update_bank(bank, caps), StateError);
}

TEST(Bank, LambdaOneIsIdentity) {
  const auto bank = init_bank(std::vector{capture_with_keys(rows_of({{0.3, -1.7}, {2.5, 0.1}}))}, 2, 1.0);
  const auto next = update_bank(bank, std::vector{capture_with_keys(rows_of({{9, 9}, {-9, 4}, {1, 1}}))});
  EXPECT_EQ(next.k_ltm, bank.k_ltm);
}

TEST(Bank, LambdaZeroIsCurrentMean) {
  const auto bank = init_bank(std::vector{capture_with_keys(rows_of({{0.3, -1.7}, {2.5, 0.1}}))}, 2, 0.0);
  const Matrix a = rows_of({{1, 2}, {3, 4}});
  const Matrix b = rows_of({{5, 6}, {7, 8}, {9, 10}, {11, 12}});
  const std::vector cur{capture_with_keys(a), capture_with_keys(Matrix(0, 2)), capture_with_keys(b)};
  const auto next = update_bank(bank, cur);
  EXPECT_EQ(next.k_ltm, 0.5 * (reduce_rows(a, 2) + reduce_rows(b, 2)));
}

TEST(Bank, ConvergesGeometrically) {
  auto bank = init_bank(std::vector{capture_with_keys(Matrix::Zero(2, 3))}, 2, 0.98);
  const Matrix c = Matrix::Constant(2, 3, 1.5);
  const std::vector cur{capture_with_keys(c)};
  double gap = (bank.k_ltm - c).norm();
  for (int i = 0; i < 300; ++i) {
    bank = update_bank(bank, cur);
    const double next = (bank.k_ltm - c).norm();
    EXPECT_NEAR(next, 0.98 * gap, 1e-12 * (1.0 + gap));
    gap = next;
  }
  EXPECT_LT(gap, 0.01);
}

TEST(Gradient, ZeroAtMinimum) {
  ToyConfig cfg;
  cfg.channels = 2;
  cfg.patch = 2;
  cfg.token_width = 6;
  const ToyDenoiser model(cfg, 1);
  const auto proj = model.key_projection();
  const Grid z = testutil::random_grid({2, 4, 4}, 5);
  Mask mask(2, 2);
  mask(0, 1) = mask(1, 0) = 1;
  const Matrix keys = patchify(z, 2).tokens * proj.combined();
  SubjectBank bank;
  bank.initialized = true;
  bank.k_ltm = reduce_rows(select_rows(TokenMatrix{keys}, mask).tokens, 3);
  EXPECT_NEAR(guidance_loss(z, mask, bank, proj), 0.0, 1e-24);
  const Grid g = guidance_gradient(z, mask, bank, proj);
  for (double v : g.values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Gradient, ScalarCase) {
  const KeyProjection proj{1, 1, Matrix::Identity(1, 1), Matrix::Identity(1, 1)};
  SubjectBank bank;
  bank.initialized = true;
  bank.k_ltm = Matrix::Constant(1, 1, 0.75);
  const Grid z({1, 1, 1}, -0.5);
  const Mask mask(1, 1, 1);
  EXPECT_NEAR(guidance_loss(z, mask, bank, proj), 1.5625, 1e-15);
  EXPECT_NEAR(guidance_gradient(z, mask, bank, proj)[0], 2.0 * (-0.5 - 0.75), 1e-15);
}

TEST(Gradient, EmptyMaskIsZero) {
  const ToyDenoiser model(ToyConfig{}, 2);
  SubjectBank bank;
  bank.initialized = true;
  bank.k_ltm = Matrix::Ones(4, 32);
  const Grid z = testutil::random_grid({4, 8, 8}, 6);
  EXPECT_EQ(guidance_gradient(z, Mask(2, 2), bank, model.key_projection()), Grid(z.shape()));
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (int trial = 0; trial < 10; ++trial) {
    ToyConfig cfg;
    cfg.channels = 1 + trial % 3;
    cfg.patch = 2;
    cfg.token_width = cfg.channels + 2 + trial % 2;
    const ToyDenoiser model(cfg, static_cast<std::uint64_t>(trial));
    const auto proj = model.key_projection();
    const Grid z = testutil::random_grid({cfg.channels, 8, 8}, 200 + trial);
    NoiseStream rng(300 + trial, "mask");
    Mask mask(4, 4);
    for (auto& b : mask.bits) b = rng.uniform(0, 1) < 0.4;
    mask.bits[static_cast<std::size_t>(trial)] = 1;
    SubjectBank bank;
    bank.initialized = true;
    bank.k_ltm = Matrix(3 + trial % 4, cfg.token_width);
    for (Eigen::Index i = 0; i < bank.k_ltm.size(); ++i) bank.k_ltm.data()[i] = rng.normal();
    const Grid g = guidance_gradient(z, mask, bank, proj);
    const Grid fd = oracle::fd_gradient(z, mask, bank, proj, 1e-4);
    const double err = std::sqrt(squared_norm((g - fd).values()) / squared_norm(fd.values()));
    EXPECT_LT(err, 1e-4) << "trial " << trial;
  }
}

TEST(Gradient, SmallStepDecreasesLoss) {
  const ToyDenoiser model(ToyConfig{}, 7);
  const auto proj = model.key_projection();
  const Grid z = testutil::random_grid({4, 16, 16}, 8);
  Mask mask(4, 4);
  mask(1, 1) = mask(1, 2) = mask(2, 1) = 1;
  SubjectBank bank;
  bank.initialized = true;
  bank.k_ltm = Matrix::Constant(16, 32, 0.1);
  double loss = guidance_loss(z, mask, bank, proj);
  Grid cur = z;
  for (int i = 0; i < 20; ++i) {
    cur -= 0.01 * guidance_gradient(cur, mask, bank, proj);
    const double next = guidance_loss(cur, mask, bank, proj);
    EXPECT_LT(next, loss);
    loss = next;
  }
}

TEST(Strength, ScalarArithmetic) {
  const auto s = NoiseSchedule::from_betas({0.25});
  const GuidanceConfig cfg{0.1, 16, 16};
  EXPECT_NEAR(guidance_strength(1, cfg, s), 0.05, 1e-15);
  const FrameLatent z{Grid({1, 2, 2}, 1.0), 1, 1};
  const auto out = apply_guidance(z, Grid({1, 2, 2}, 1.0), 1, cfg, s);
  for (double v : out.data.values()) EXPECT_NEAR(v, 0.95, 1e-15);
}

TEST(Strength, ZeroGammaAndCleanEndAreIdentity) {
  const auto s = NoiseSchedule::from_betas({0.0, 0.3});
  const FrameLatent z{testutil::random_grid({1, 3, 3}, 9), 1, 1};
  const Grid g = testutil::random_grid({1, 3, 3}, 10);
  EXPECT_EQ(apply_guidance(z, g, 2, GuidanceConfig{0.0, 1, 1}, s).data, z.data);
  EXPECT_EQ(apply_guidance(z, g, 1, GuidanceConfig{0.5, 1, 1}, s).data, z.data);
}

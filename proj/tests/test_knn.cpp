#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ipd/knn.hpp"
#include "oracles.hpp"

using ipd::ErrorCode;
using ipd::Matrix;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const ipd::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected ipd::Error";
  return ErrorCode::InvalidArgument;
}

void expect_matches_oracle(const Matrix& x, std::size_t k, const ipd::KnnOptions& opts = {}) {
  const auto table = ipd::knn_l2(x, k, opts);
  const auto expected = oracle::brute_force_knn(x, k);
  ASSERT_EQ(table.n, x.rows());
  ASSERT_EQ(table.k, k);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      ASSERT_LE(oracle::rel_diff(table.dist(i, j), expected[i][j]), 1e-9)
          << "point " << i << " rank " << j;
    }
  }
}

}  // namespace

TEST(KnnL2, HandComputedCollinear) {
  const auto x = Matrix::from_rows({{0, 0}, {1, 0}, {3, 0}});
  const auto t = ipd::knn_l2(x, 2);
  const std::vector<std::vector<double>> want{{1, 3}, {1, 2}, {2, 3}};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(t.dist(i, j), want[i][j]);
  }
  EXPECT_EQ(t.neighbors(0)[0], 1u);
  EXPECT_EQ(t.neighbors(2)[0], 1u);
}

TEST(KnnL2, KOutOfRange) {
  const auto x = oracle::random_cloud(5, 3, 1);
  EXPECT_EQ(code_of([&] { ipd::knn_l2(x, 5); }), ErrorCode::KOutOfRange);
  EXPECT_EQ(code_of([&] { ipd::knn_l2(x, 0); }), ErrorCode::KOutOfRange);
  EXPECT_NO_THROW(ipd::knn_l2(x, 4));
}

TEST(KnnL2, RejectsNonFinite) {
  auto x = oracle::random_cloud(5, 3, 1);
  x(2, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(code_of([&] { ipd::knn_l2(x, 2); }), ErrorCode::NonFinite);
  x(2, 1) = std::numeric_limits<double>::infinity();
  EXPECT_EQ(code_of([&] { ipd::pairwise_l2(x); }), ErrorCode::NonFinite);
}

TEST(KnnL2, TiesBrokenByLowerIndex) {
  const auto x = Matrix::from_rows({{0, 0}, {0, 1}, {1, 0}, {-1, 0}, {0, -1}});
  const auto t = ipd::knn_l2(x, 4);
  const auto nb = t.neighbors(0);
  EXPECT_EQ(std::vector<std::uint32_t>(nb.begin(), nb.end()), (std::vector<std::uint32_t>{1, 2, 3, 4}));
}

TEST(KnnL2, DuplicatesReportedAsZero) {
  const auto x = Matrix::from_rows({{1, 1}, {1, 1}, {4, 5}});
  const auto t = ipd::knn_l2(x, 2);
  EXPECT_EQ(t.dist(0, 0), 0.0);
  EXPECT_EQ(t.dist(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(t.dist(2, 0), 5.0);
}

TEST(KnnL2, MatchesBruteForce500In32D) {
  expect_matches_oracle(oracle::random_cloud(500, 32, 2024), 20);
}

TEST(KnnL2, MatchesBruteForceAcrossShapes) {
  // Column counts straddle the SIMD width and the feature chunk; row counts straddle tiles.
  std::mt19937_64 gen(77);
  const std::size_t cols_choices[] = {1, 3, 7, 8, 9, 33, 511, 512, 513, 1100};
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t rows = 2 + gen() % 150;
    const std::size_t cols = cols_choices[gen() % std::size(cols_choices)];
    const std::size_t k = 1 + gen() % (rows - 1);
    SCOPED_TRACE(testing::Message() << rows << "x" << cols << " k=" << k);
    expect_matches_oracle(oracle::random_cloud(rows, cols, gen(), -5, 5), k);
  }
}

TEST(KnnL2, PanelPathIdenticalToCondensedPath) {
  const auto x = oracle::random_cloud(150, 70, 5);
  const auto a = ipd::knn_l2(x, 7);
  const auto b = ipd::knn_l2(x, 7, {.workers = 0, .condensed_budget_bytes = 0});
  EXPECT_EQ(a.distances, b.distances);
  EXPECT_EQ(a.indices, b.indices);
}

TEST(KnnL2, WorkerCountDoesNotChangeResult) {
  const auto x = oracle::random_cloud(200, 600, 6);
  const auto one = ipd::knn_l2(x, 10, {.workers = 1});
  for (unsigned w : {2u, 3u, 8u}) {
    const auto many = ipd::knn_l2(x, 10, {.workers = w});
    EXPECT_EQ(one.distances, many.distances) << w << " workers";
    EXPECT_EQ(one.indices, many.indices) << w << " workers";
    const auto panel = ipd::knn_l2(x, 10, {.workers = w, .condensed_budget_bytes = 0});
    EXPECT_EQ(one.distances, panel.distances) << w << " workers, panel";
  }
}

TEST(KnnL2, IsometryInvariance) {
  const auto x = oracle::random_cloud(120, 12, 8);
  const auto y = oracle::random_isometry(x, 9);
  const auto a = ipd::knn_l2(x, 5), b = ipd::knn_l2(y, 5);
  for (std::size_t i = 0; i < a.distances.size(); ++i) {
    EXPECT_LE(oracle::rel_diff(a.distances[i], b.distances[i]), 1e-9);
  }
}

TEST(KnnL2, ScalingCovariance) {
  const auto x = oracle::random_cloud(100, 20, 10);
  for (double alpha : {0.1, 3.0, 100.0}) {
    const auto a = ipd::knn_l2(x, 5), b = ipd::knn_l2(oracle::scaled(x, alpha), 5);
    for (std::size_t i = 0; i < a.distances.size(); ++i) {
      EXPECT_LE(oracle::rel_diff(alpha * a.distances[i], b.distances[i]), 1e-12);
    }
  }
}

TEST(KnnL2, RowPermutationPermutesTable) {
  const auto x = oracle::random_cloud(90, 15, 11);
  std::vector<std::size_t> perm(x.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(12));
  const auto a = ipd::knn_l2(x, 6);
  const auto b = ipd::knn_l2(oracle::permuted_rows(x, perm), 6);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto ra = a.row(perm[i]), rb = b.row(i);
    EXPECT_TRUE(std::equal(ra.begin(), ra.end(), rb.begin())) << "row " << i;
  }
}

TEST(KnnL2, RowSubsetMatchesExtractedMatrix) {
  const auto x = oracle::random_cloud(60, 9, 13);
  const std::vector<std::size_t> rows{3, 5, 8, 13, 21, 34, 55, 1, 2};
  std::vector<std::vector<double>> extracted;
  for (auto r : rows) extracted.emplace_back(x.row(r).begin(), x.row(r).end());
  const auto a = ipd::knn_l2(x, rows, 3);
  const auto b = ipd::knn_l2(Matrix::from_rows(extracted), 3);
  EXPECT_EQ(a.distances, b.distances);
  EXPECT_EQ(a.indices, b.indices);
}

TEST(PairwiseL2, ThreeFourFive) {
  const auto d = ipd::pairwise_l2(Matrix::from_rows({{0, 0}, {3, 4}}));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_DOUBLE_EQ(d[0], 5.0);
}

TEST(PairwiseL2, IdenticalPoints) {
  const auto d = ipd::pairwise_l2(Matrix::from_rows({{2, 7, 1}, {2, 7, 1}, {2, 7, 1}}));
  EXPECT_EQ(d, (std::vector<double>{0, 0, 0}));
}

TEST(PairwiseL2, NeedsTwoRows) {
  EXPECT_EQ(code_of([] { ipd::pairwise_l2(Matrix::from_rows({{1, 2}})); }), ErrorCode::TooFewPoints);
}

TEST(PairwiseL2, MatchesNaiveDoubleLoop200) {
  const auto x = oracle::random_cloud(200, 45, 14);
  const auto got = ipd::pairwise_l2(x);
  const auto want = oracle::brute_force_pairwise(x);
  ASSERT_EQ(got.size(), 200u * 199u / 2u);
  for (std::size_t i = 0; i < got.size(); ++i) ASSERT_LE(oracle::rel_diff(got[i], want[i]), 1e-12);
}

TEST(PairwiseL2, LexicographicOrderAndSinglePairAgreement) {
  const auto x = oracle::random_cloud(70, 1030, 15);
  const auto d = ipd::pairwise_l2(x, {.workers = 4});
  std::size_t idx = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = i + 1; j < x.rows(); ++j, ++idx) {
      ASSERT_EQ(ipd::condensed_index(i, j, x.rows()), idx);
      // The scalar pair routine shares the kernels' accumulation order exactly.
      ASSERT_EQ(d[idx], ipd::l2(x.row(i), x.row(j)));
      ASSERT_EQ(d[idx], ipd::l2(x.row(j), x.row(i)));
    }
  }
}

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ipd/scaling.hpp"
#include "ipd/synth.hpp"
#include "oracles.hpp"

using ipd::ErrorCode;
using ipd::ScalingRecord;

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

/// A record whose model-A and model-B basis is exactly `basis` (N = 1, k_f = 1).
ScalingRecord with_basis(double basis) {
  ScalingRecord r;
  r.dataset_id = "r";
  r.train_size = 1;
  r.d_data = 10.0;
  r.k_f = 1.0;
  r.loss = std::exp(basis);
  return r;
}

std::vector<ScalingRecord> random_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScalingRecord> out(n);
  for (auto& r : out) {
    r.dataset_id = "x";
    r.train_size = 100 + gen() % 100000;
    r.d_data = 5.0 + 40.0 * u(gen);
    r.k_f = 1e-4 + 1e-3 * u(gen);
    r.loss = 0.01 + u(gen);
    r.d_repr = 2.0 + 10.0 * u(gen);
  }
  return out;
}

void expect_fit_invariants(const ipd::FitResult& f) {
  double sse = 0.0, sum = 0.0;
  for (double r : f.residuals) {
    sse += r * r;
    sum += r;
  }
  EXPECT_LE(oracle::rel_diff(f.sse, sse), 1e-12);
  EXPECT_NEAR(sum, 0.0, 1e-9);
  EXPECT_EQ(f.residuals.size(), f.n_records);
}

double sse_at(const ipd::FitResult& f, double offset) {
  double s = 0.0;
  for (double r : f.residuals) {
    const double b = r + f.offset;
    s += (b - offset) * (b - offset);
  }
  return s;
}

}  // namespace

TEST(FitModel, TwoBasesMatchGridSearch) {
  const std::vector<ScalingRecord> recs{with_basis(2.0), with_basis(3.0)};
  const auto f = ipd::fit_model_a(recs);
  EXPECT_NEAR(f.offset, 2.5, 1e-12);
  EXPECT_NEAR(f.sse, 0.5, 1e-12);
  EXPECT_NEAR(f.offset, oracle::grid_search_offset({2.0, 3.0}, 0.0, 5.0), 1e-3);
  expect_fit_invariants(f);
}

TEST(FitModel, ModelBThreeBases) {
  const std::vector<ScalingRecord> recs{with_basis(1.0), with_basis(1.0), with_basis(4.0)};
  const auto f = ipd::fit_model_b(recs);
  EXPECT_NEAR(f.offset, 2.0, 1e-12);
  EXPECT_NEAR(f.sse, 6.0, 1e-12);
  EXPECT_NEAR(f.offset, oracle::grid_search_offset({1.0, 1.0, 4.0}, 0.0, 5.0), 1e-3);
  EXPECT_EQ(f.model, ipd::ScalingModel::BWithoutKF);
}

TEST(FitModel, SingleRecord) {
  ScalingRecord r{"one", 5000, 12.0, 3e-4, 0.2, 4.0, {}};
  const std::vector<ScalingRecord> recs{r};
  for (auto m : {ipd::ScalingModel::AWithKF, ipd::ScalingModel::BWithoutKF, ipd::ScalingModel::Repr}) {
    const auto f = ipd::fit_model(recs, m);
    EXPECT_EQ(f.sse, 0.0);
    EXPECT_EQ(f.offset, ipd::scaling_basis(r, m));
  }
}

TEST(FitModel, BasisFormulas) {
  ScalingRecord r{"b", 1000, 8.0, 2e-4, 0.3, 5.0, {}};
  const double ln_n = std::log(1000.0);
  EXPECT_DOUBLE_EQ(ipd::scaling_basis(r, ipd::ScalingModel::AWithKF),
                   std::log(0.3) + ln_n / 8.0 - std::log(2e-4));
  EXPECT_DOUBLE_EQ(ipd::scaling_basis(r, ipd::ScalingModel::BWithoutKF), std::log(0.3) + ln_n / 8.0);
  EXPECT_DOUBLE_EQ(ipd::scaling_basis(r, ipd::ScalingModel::Repr), std::log(0.3) + ln_n / 5.0);
}

TEST(FitModel, RecoversOffsetFromExactModelA) {
  std::vector<ipd::ScalingSpec> specs;
  for (std::uint64_t n : {500u, 2000u, 10000u, 60000u}) {
    for (double d : {6.0, 13.0, 25.0}) specs.push_back({n, d, d * 1e-5});
  }
  const auto recs = ipd::synth_scaling_records(0.7, specs, 0.0, 1);
  const auto f = ipd::fit_model_a(recs);
  EXPECT_NEAR(f.offset, 0.7, 1e-12);
  EXPECT_LE(f.sse, 1e-20);
}

TEST(FitModel, ConstantKfShiftIsAbsorbedByModelB) {
  std::vector<ipd::ScalingSpec> specs;
  for (std::uint64_t n : {300u, 3000u, 30000u}) specs.push_back({n, 11.0, 4e-4});
  const auto recs = ipd::synth_scaling_records(-0.3, specs, 0.2, 5);
  const auto a = ipd::fit_model_a(recs), b = ipd::fit_model_b(recs);
  EXPECT_NEAR(a.sse, b.sse, 1e-12);
  EXPECT_NEAR(b.offset - a.offset, std::log(4e-4), 1e-12);
}

TEST(FitModel, ReprRecoversOffset) {
  std::vector<ScalingRecord> recs;
  for (std::uint64_t n : {100u, 1000u, 50000u}) {
    for (double dr : {2.0, 7.5}) {
      ScalingRecord r{"rep", n, 30.0, 1e-3, 0.0, dr, {}};
      r.loss = std::exp(-std::log(static_cast<double>(n)) / dr - 1.2);
      recs.push_back(r);
    }
  }
  const auto f = ipd::fit_model_repr(recs);
  EXPECT_NEAR(f.offset, -1.2, 1e-12);
  EXPECT_LE(f.sse, 1e-20);
  recs[3].d_repr.reset();
  EXPECT_EQ(code_of([&] { ipd::fit_model_repr(recs); }), ErrorCode::MissingDRepr);
}

TEST(FitModel, EmptyRecords) {
  EXPECT_EQ(code_of([] { ipd::fit_model_a(std::vector<ScalingRecord>{}); }), ErrorCode::EmptyRecords);
}

TEST(FitModel, OffsetIsStrictMinimizerAndTranslationFree) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto recs = random_records(2 + s * 3, s);
    for (auto m : {ipd::ScalingModel::AWithKF, ipd::ScalingModel::BWithoutKF, ipd::ScalingModel::Repr}) {
      const auto f = ipd::fit_model(recs, m);
      expect_fit_invariants(f);
      EXPECT_GT(sse_at(f, f.offset + 1e-3), f.sse);
      EXPECT_GT(sse_at(f, f.offset - 1e-3), f.sse);

      const double c = 0.37;
      auto shifted = recs;
      for (auto& r : shifted) r.loss *= std::exp(c);
      const auto g = ipd::fit_model(shifted, m);
      EXPECT_NEAR(g.offset, f.offset + c, 1e-12);
      EXPECT_NEAR(g.sse, f.sse, 1e-12);
    }
  }
}

TEST(LogLikelihoodRatio, Fixtures) {
  ipd::FitResult a, b;
  a.n_records = b.n_records = 3;
  a.sse = b.sse = 1.25;
  EXPECT_EQ(ipd::log_likelihood_ratio(a, b), 0.0);
  a.sse = 0.0;
  b.sse = 4.0;
  EXPECT_EQ(ipd::log_likelihood_ratio(a, b), 2.0);
  EXPECT_EQ(ipd::log_likelihood_ratio(b, a), -2.0);
  b.n_records = 4;
  EXPECT_EQ(code_of([&] { ipd::log_likelihood_ratio(a, b); }), ErrorCode::MismatchedRecords);
}

TEST(LogLikelihoodRatio, SelfAndAntisymmetry) {
  const auto recs = random_records(20, 3);
  const auto a = ipd::fit_model_a(recs), b = ipd::fit_model_b(recs);
  EXPECT_EQ(ipd::log_likelihood_ratio(a, a), 0.0);
  EXPECT_EQ(ipd::log_likelihood_ratio(a, b), -ipd::log_likelihood_ratio(b, a));
}

TEST(LogLikelihoodRatio, TwoKfGroupsFavorModelA) {
  std::vector<ipd::ScalingSpec> specs;
  for (int i = 0; i < 60; ++i) {
    const std::uint64_t n = 200u << (i % 8);
    const double d = 8.0 + (i % 5) * 6.0;
    specs.push_back({n, d, i % 2 == 0 ? 1e-4 : 2.5e-4});
  }
  const auto recs = ipd::synth_scaling_records(0.5, specs, 0.1, 11);
  const double lr = ipd::log_likelihood_ratio(ipd::fit_model_a(recs), ipd::fit_model_b(recs));
  EXPECT_GT(lr, 0.0);
}

TEST(PearsonR, Fixtures) {
  const std::vector<double> xs{1, 2, 3};
  EXPECT_DOUBLE_EQ(ipd::pearson_r(xs, std::vector<double>{1, 3, 2}).r, 0.5);
  EXPECT_DOUBLE_EQ(ipd::pearson_r(xs, std::vector<double>{3, 5, 7}).r, 1.0);
  EXPECT_DOUBLE_EQ(ipd::pearson_r(xs, std::vector<double>{-1, -2, -3}).r, -1.0);
  EXPECT_EQ(ipd::pearson_r(xs, std::vector<double>{0, 1, 0}).n, 3u);
  EXPECT_EQ(code_of([&] { ipd::pearson_r(xs, std::vector<double>{4, 4, 4}); }), ErrorCode::DegenerateVariance);
  EXPECT_EQ(code_of([&] { ipd::pearson_r(xs, std::vector<double>{4, 4}); }), ErrorCode::InvalidArgument);
}

TEST(PearsonR, AffineInvarianceAndBounds) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> xs(30), ys(30);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xs[i] = g(gen);
      ys[i] = 0.4 * xs[i] + g(gen);
    }
    const double r = ipd::pearson_r(xs, ys).r;
    EXPECT_LE(std::abs(r), 1.0 + 1e-12);
    auto xt = xs, yt = ys;
    for (auto& v : xt) v = 3.5 * v - 2.0;
    for (auto& v : yt) v = 0.01 * v + 100.0;
    EXPECT_NEAR(ipd::pearson_r(xt, yt).r, r, 1e-12);
    for (auto& v : yt) v = -v;
    EXPECT_NEAR(ipd::pearson_r(xt, yt).r, -r, 1e-12);
  }
}

TEST(RobustnessBound, Fixtures) {
  EXPECT_DOUBLE_EQ(ipd::robustness_lower_bound(std::sqrt(2.0), 1.0).lower_bound, 1.0);
  EXPECT_EQ(ipd::robustness_lower_bound(0.0, 3.0).lower_bound, 0.0);
  EXPECT_NEAR(ipd::robustness_lower_bound(1.0, 2.5e-4).lower_bound, 2828.4271247461897, 1e-9);
  EXPECT_EQ(code_of([] { ipd::robustness_lower_bound(1.0, 0.0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { ipd::robustness_lower_bound(1.0, -2.0); }), ErrorCode::InvalidArgument);
}

TEST(RobustnessBound, HalvingLipschitzDoublesBound) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(1e-6, 10.0);
  for (int t = 0; t < 200; ++t) {
    const double m = u(gen), k = u(gen);
    EXPECT_EQ(ipd::robustness_lower_bound(m, k / 2).lower_bound,
              2.0 * ipd::robustness_lower_bound(m, k).lower_bound);
  }
}

TEST(CompareDims, Fixtures) {
  auto c = ipd::compare_dims(10.0, 5.0);
  EXPECT_TRUE(c.satisfied);
  EXPECT_EQ(c.gap, 5.0);
  c = ipd::compare_dims(10.0, 12.0);
  EXPECT_FALSE(c.satisfied);
  EXPECT_EQ(c.gap, -2.0);
  c = ipd::compare_dims(7.25, 7.25);
  EXPECT_TRUE(c.satisfied);
  EXPECT_EQ(c.gap, 0.0);
}

TEST(RankTasks, Fixtures) {
  const auto r = ipd::rank_tasks({{"task2", 1.45e-4}, {"task1", 2.1e-4}});
  ASSERT_EQ(r.order.size(), 2u);
  EXPECT_EQ(r.order[0].first, "task1");
  EXPECT_EQ(r.order[1].first, "task2");
  ASSERT_EQ(r.ratios.size(), 1u);
  EXPECT_NEAR(r.ratios[0].ratio, 1.4482758620689655, 1e-12);
  EXPECT_FALSE(r.ratios[0].tie);

  const auto tie = ipd::rank_tasks({{"a", 3e-4}, {"b", 3e-4}});
  EXPECT_TRUE(tie.ratios[0].tie);
  EXPECT_EQ(tie.ratios[0].ratio, 1.0);
  EXPECT_EQ(tie.order[0].first, "a");

  const auto one = ipd::rank_tasks({{"only", 1.0}});
  EXPECT_EQ(one.order.size(), 1u);
  EXPECT_TRUE(one.ratios.empty());

  EXPECT_EQ(code_of([] { ipd::rank_tasks({{"bad", 0.0}}); }), ErrorCode::NonPositiveField);
  EXPECT_EQ(code_of([] { ipd::rank_tasks({}); }), ErrorCode::InvalidArgument);
}

TEST(RankTasks, OrderInvariantUnderPositiveScaling) {
  std::vector<std::pair<std::string, double>> tasks{{"a", 0.3}, {"b", 1.7}, {"c", 0.9}, {"d", 0.05}, {"e", 4.0}};
  const auto base = ipd::rank_tasks(tasks);
  for (double s : {1e-6, 0.5, 3.0, 1e5}) {
    auto scaled = tasks;
    for (auto& t : scaled) t.second *= s;
    const auto r = ipd::rank_tasks(scaled);
    for (std::size_t i = 0; i < tasks.size(); ++i) EXPECT_EQ(r.order[i].first, base.order[i].first);
  }
  EXPECT_EQ(base.ratios.size(), 10u);
}

TEST(GroupRecords, PreservesFirstAppearanceOrder) {
  std::vector<ScalingRecord> recs(5);
  const char* ids[] = {"b", "a", "b", "c", "a"};
  for (std::size_t i = 0; i < 5; ++i) recs[i].dataset_id = ids[i];
  const auto g = ipd::group_records(recs, [](const ScalingRecord& r) { return r.dataset_id; });
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[0].first, "b");
  EXPECT_EQ(g[0].second.size(), 2u);
  EXPECT_EQ(g[1].first, "a");
  EXPECT_EQ(g[2].first, "c");
}

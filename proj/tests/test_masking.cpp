#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <thread>

#include "cbm/masking.hpp"
#include "test_support.hpp"

namespace cbm {
namespace {

SalienceProfile profile_of(std::vector<double> p) {
  SalienceProfile s;
  s.magnitudes = p;
  s.probabilities = std::move(p);
  return s;
}

SalienceProfile flat_profile(std::size_t n) {
  return profile_of(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

double chi_square_p_value(const std::vector<std::size_t>& observed, const std::vector<double>& expected_p,
                          std::size_t trials) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = expected_p[i] * static_cast<double>(trials);
    stat += (static_cast<double>(observed[i]) - e) * (static_cast<double>(observed[i]) - e) / e;
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

TEST(MaskCount, RoundHalfUpAndClamp) {
  EXPECT_EQ(mask_count(16, 0.25), 4u);
  EXPECT_EQ(mask_count(16, 0.0), 0u);
  EXPECT_EQ(mask_count(16, 1.0), 16u);
  EXPECT_EQ(mask_count(4, 0.125), 1u);   // 0.5 rounds up
  EXPECT_EQ(mask_count(4, 0.124), 0u);
  EXPECT_EQ(mask_count(4, 0.375), 2u);  // 1.5 rounds up
  EXPECT_THROW(mask_count(4, 1.1), Error);
  EXPECT_THROW(mask_count(4, -0.1), Error);
}

TEST(PlanMask, ExactDistinctCount) {
  RngStream rng(1, 1, 1);
  const auto plan = plan_mask(flat_profile(16), 0.25, rng);
  EXPECT_EQ(plan.size(), 4u);
  EXPECT_TRUE(std::is_sorted(plan.indices.begin(), plan.indices.end()));
  EXPECT_EQ(std::set<std::size_t>(plan.indices.begin(), plan.indices.end()).size(), 4u);
}

TEST(PlanMask, ZeroRatioIsEmpty) {
  RngStream rng(1, 1, 1);
  EXPECT_TRUE(plan_mask(flat_profile(16), 0.0, rng).empty());
}

TEST(PlanMask, DegenerateDistributionIsCertain) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    RngStream rng(s, 0, 0);
    const auto plan = plan_mask(profile_of({1, 0, 0, 0}), 0.25, rng);
    EXPECT_EQ(plan.indices, std::vector<std::size_t>{1});
  }
}

TEST(PlanMask, ExhaustedSupportFallsBackToUniform) {
  std::map<std::size_t, int> seen;
  for (std::uint64_t s = 0; s < 400; ++s) {
    RngStream rng(s, 0, 0);
    const auto plan = plan_mask(profile_of({1, 0, 0, 0}), 0.5, rng);
    ASSERT_EQ(plan.size(), 2u);
    EXPECT_EQ(plan.indices[0], 1u);
    ++seen[plan.indices[1]];
  }
  EXPECT_EQ(seen.size(), 3u);
  for (const auto& [index, count] : seen) EXPECT_GT(count, 80) << index;
}

TEST(PlanMask, SingleDrawFrequenciesMatchProbabilities) {
  const std::vector<double> p = {0.5, 0.25, 0.125, 0.125};
  const auto profile = profile_of(p);
  constexpr std::size_t kTrials = 100000;
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t t = 0; t < kTrials; ++t) {
    RngStream rng(t, 3, 9);
    const auto plan = plan_mask(profile, 0.25, rng);
    ASSERT_EQ(plan.size(), 1u);
    ++counts[plan.indices[0] - 1];
  }
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(static_cast<double>(counts[i]) / kTrials, p[i], 0.01);
  }
  EXPECT_GT(chi_square_p_value(counts, p, kTrials), 0.01);
}

TEST(PlanMask, PairsMatchEnumeration) {
  const std::vector<double> p = {0.5, 0.25, 0.125, 0.125};
  const auto profile = profile_of(p);
  constexpr std::size_t kTrials = 60000;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
  for (std::size_t t = 0; t < kTrials; ++t) {
    RngStream rng(t, 4, 2);
    const auto plan = plan_mask(profile, 0.5, rng);
    ASSERT_EQ(plan.size(), 2u);
    ++counts[{plan.indices[0] - 1, plan.indices[1] - 1}];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      const double expected = testing::pair_probability(p, i, j);
      total += expected;
      EXPECT_NEAR(static_cast<double>(counts[{i, j}]) / kTrials, expected, 0.01) << i << "," << j;
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(PlanMask, WithReplacementCanRepeat) {
  std::size_t short_plans = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    RngStream rng(s, 0, 0);
    const auto plan = plan_mask(profile_of({0.9, 0.05, 0.05, 0.0}), 0.5, rng, Replacement::With);
    EXPECT_LE(plan.size(), 2u);
    EXPECT_GE(plan.size(), 1u);
    if (plan.size() < 2) ++short_plans;
  }
  EXPECT_GT(short_plans, 100u);  // both draws hit patch 0 with probability 0.81
}

TEST(PlanMask, ReproducibleAcrossThreadsAndOrder) {
  const auto profile = testing::quadrant_image();
  const auto salience = salience_profile(profile, PatchGrid{4, 4});
  std::vector<MaskPlan> forward(64);
  for (std::size_t id = 0; id < 64; ++id) {
    RngStream rng(7, 3, id);
    forward[id] = plan_mask(salience, 0.4, rng);
  }
  std::vector<MaskPlan> threaded(64);
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t k = static_cast<std::size_t>(t); k < 64; k += 4) {
        const std::size_t id = 63 - k;  // reverse order, interleaved across threads
        RngStream rng(7, 3, id);
        threaded[id] = plan_mask(salience, 0.4, rng);
      }
    });
  }
  for (auto& th : pool) th.join();
  EXPECT_EQ(forward, threaded);
  EXPECT_EQ(forward[5].stream, (StreamKey{7, 3, 5}));
}

TEST(PlanMaskUniform, TwoOfFourPairsEquiprobable) {
  constexpr std::size_t kTrials = 60000;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
  for (std::size_t t = 0; t < kTrials; ++t) {
    RngStream rng(t, 1, 1);
    const auto plan = plan_mask_uniform(4, 0.5, rng);
    ASSERT_EQ(plan.size(), 2u);
    ++counts[{plan.indices[0], plan.indices[1]}];
  }
  EXPECT_EQ(counts.size(), 6u);
  for (const auto& [pair, c] : counts) EXPECT_NEAR(static_cast<double>(c) / kTrials, 1.0 / 6.0, 0.01);
}

TEST(PlanMaskUniform, Extremes) {
  RngStream rng(3, 3, 3);
  EXPECT_EQ(plan_mask_uniform(9, 1.0, rng).size(), 9u);
  EXPECT_TRUE(plan_mask_uniform(9, 0.0, rng).empty());
}

TEST(ApplyMask, EmptyPlanIsIdentity) {
  const auto img = testing::random_image(8, 8, 3, 4);
  EXPECT_EQ(apply_mask(img, PatchGrid{2, 2}, MaskPlan{{}, 4, {}}), img);
}

TEST(ApplyMask, FullPlanZeroesEverything) {
  const auto img = testing::random_image(8, 8, 3, 4);
  const auto out = apply_mask(img, PatchGrid{2, 2}, MaskPlan{{1, 2, 3, 4}, 4, {}});
  for (float v : out.pixels()) EXPECT_EQ(v, 0.0f);
}

TEST(ApplyMask, FirstPatchIsTopLeftBlock) {
  Image img(4, 4, 1);
  for (std::size_t i = 0; i < 16; ++i) img.pixels()[i] = static_cast<float>(i + 1);
  const auto out = apply_mask(img, PatchGrid{2, 2}, MaskPlan{{1}, 4, {}});
  const std::vector<float> expected = {0, 0, 3, 4, 0, 0, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  EXPECT_EQ(out.pixels(), expected);
}

TEST(ApplyMask, RejectsOutOfRangeIndex) {
  try {
    apply_mask(Image(4, 4, 1), PatchGrid{2, 2}, MaskPlan{{5}, 4, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidPlan);
  }
  EXPECT_THROW(apply_mask(Image(4, 4, 1), PatchGrid{2, 2}, MaskPlan{{0}, 4, {}}), Error);
}

TEST(ApplyMask, NeverTouchesUnmaskedPixels) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto img = testing::random_image(16, 16, 3, s);
    RngStream rng(s, 0, 0);
    const auto plan = plan_mask_uniform(16, 0.3, rng);
    const auto out = apply_mask(img, PatchGrid{4, 4}, plan);
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) {
        const std::size_t patch = (y / 4) * 4 + x / 4 + 1;
        const bool masked = std::binary_search(plan.indices.begin(), plan.indices.end(), patch);
        for (std::size_t c = 0; c < 3; ++c) {
          EXPECT_EQ(out.at(y, x, c), masked ? 0.0f : img.at(y, x, c));
        }
      }
    }
  }
}

TEST(SaliencePrioritization, CheckerboardPatchMaskedMostOften) {
  const auto salience = salience_profile(testing::quadrant_image(), PatchGrid{2, 2});
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t t = 0; t < 10000; ++t) {
    RngStream rng(t, 0, 0);
    ++counts[plan_mask(salience, 0.25, rng).indices.at(0) - 1];
  }
  for (std::size_t i = 1; i < 4; ++i) EXPECT_GT(counts[0], counts[i]);
}

TEST(Rng, StreamsAreIndependentOfDrawHistory) {
  RngStream a(1, 2, 3);
  RngStream b(1, 2, 3);
  RngStream other(1, 2, 4);
  for (int i = 0; i < 10; ++i) other();
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
  EXPECT_NE(RngStream(1, 2, 3)(), RngStream(1, 3, 2)());
}

TEST(Rng, BelowAndUniformRanges) {
  RngStream rng(9, 9, 9);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++hist[v];
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
}

}  // namespace
}  // namespace cbm

#include "hydrocast/error.hpp"
#include "hydrocast/masking.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <array>

using namespace hydrocast;
using hydrocast::testing::random_window;

namespace {

/// Pearson statistic of observed counts against a uniform law.
double chi_square_uniform(const std::vector<int>& counts) {
  double total = 0.0;
  for (const int c : counts) total += c;
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (const int c : counts) stat += (c - expected) * (c - expected) / expected;
  return stat;
}

// Upper 1% points of the chi-square law (scipy.stats.chi2.ppf(0.99, dof)).
constexpr double kChi2Crit39 = 62.4281210161849;
constexpr double kChi2Crit4 = 13.276704135987622;

}  // namespace

TEST(TrainingMask, TypeInvariantsOverRandomWindows) {
  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto w = random_window(6, 64, seed);
    // punch random holes, including inside the suffix region
    for (int i = 0; i < 40; ++i) w.observed(rng.uniform_int(0, 5), rng.uniform_int(0, 63)) = false;
    MaskSpec spec;
    spec.max_horizon = 30;
    const auto mask = training_mask(w, spec, rng);
    EXPECT_FALSE(mask.target.row(5).any());
    for (int k = 0; k < 6; ++k) {
      int first = -1;
      for (int l = 0; l < 64; ++l) {
        if (mask.target(k, l)) {
          EXPECT_TRUE(w.observed(k, l)) << "target on an unobserved position";
          if (first < 0) first = l;
        }
      }
      if (first < 0) continue;
      // Everything after the first target is a target or unobserved: a suffix.
      for (int l = first; l < 64; ++l) EXPECT_TRUE(mask.target(k, l) || !w.observed(k, l));
      EXPECT_GE(first, 64 - 30);
    }
  }
}

TEST(TrainingMask, SingleChannelSuffixIndexing) {
  const auto w = random_window(6, 240, 1);
  MaskSpec spec;
  spec.max_channels = 1;
  Rng rng(17);
  bool saw_full_horizon = false;
  for (int i = 0; i < 400; ++i) {
    const auto mask = training_mask(w, spec, rng);
    int channels = 0;
    for (int k = 0; k < 6; ++k) {
      const int n = static_cast<int>(mask.target.row(k).count());
      if (n == 0) continue;
      ++channels;
      EXPECT_TRUE(mask.target.row(k).tail(n).all());
      if (n == 40) {
        saw_full_horizon = true;
        EXPECT_FALSE(mask.target.row(k).head(200).any());
        EXPECT_TRUE(mask.target.row(k).segment(200, 40).all());
      }
    }
    EXPECT_EQ(channels, 1);
  }
  EXPECT_TRUE(saw_full_horizon);
}

TEST(TrainingMask, FullBoundaryMasksEveryLevelPosition) {
  auto w = random_window(4, 50, 2);
  w.observed(1, 10) = false;
  MaskSpec spec{50, 50, 3};
  Rng rng(3);
  int hits = 0;
  for (int i = 0; i < 200 && hits == 0; ++i) {
    const auto mask = training_mask(w, spec, rng);
    if (mask.target.topRows(3).rowwise().any().all()) {
      ++hits;
      EXPECT_TRUE((mask.target.topRows(3) == w.observed.topRows(3)).all());
      EXPECT_FALSE(mask.target.row(3).any());
    }
  }
  EXPECT_EQ(hits, 1);
}

TEST(TrainingMask, HorizonAndChannelCountAreUniform) {
  const auto w = random_window(6, 240, 4);
  const MaskSpec spec;  // horizons 1..40, 1..5 channels
  Rng rng(2024);
  std::vector<int> horizon_counts(40, 0);
  std::vector<int> channel_counts(5, 0);
  for (int draw = 0; draw < 10000; ++draw) {
    const auto mask = training_mask(w, spec, rng);
    int channels = 0;
    for (int k = 0; k < 5; ++k) {
      const int h = static_cast<int>(mask.target.row(k).count());
      if (h == 0) continue;
      ++channels;
      ASSERT_GE(h, 1);
      ASSERT_LE(h, 40);
      ++horizon_counts[h - 1];
    }
    ++channel_counts[channels - 1];
  }
  EXPECT_LT(chi_square_uniform(horizon_counts), kChi2Crit39);
  EXPECT_LT(chi_square_uniform(channel_counts), kChi2Crit4);
}

TEST(TrainingMask, DeterministicPerSeed) {
  const auto w = random_window(6, 240, 8);
  Rng a(99);
  Rng b(99);
  for (int i = 0; i < 50; ++i) {
    EXPECT_TRUE((training_mask(w, MaskSpec{}, a).target == training_mask(w, MaskSpec{}, b).target).all());
  }
}

TEST(TrainingMask, Errors) {
  auto w = random_window(3, 30, 1);
  w.observed.topRows(2).setConstant(false);
  Rng rng(1);
  try {
    training_mask(w, MaskSpec{1, 10, -1}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoEligibleChannel);
  }
  EXPECT_THROW(training_mask(random_window(3, 30, 1), MaskSpec{1, 31, -1}, rng), Error);
  EXPECT_THROW(training_mask(random_window(3, 30, 1), MaskSpec{1, 10, 3}, rng), Error);
}

TEST(ForecastMask, SingleChannel) {
  const auto w = random_window(6, 240, 1);
  const auto mask = forecast_mask(w, {2}, 40);
  EXPECT_EQ(mask.count(), 40);
  EXPECT_TRUE(mask.target.row(2).segment(200, 40).all());
  const auto positions = mask.positions();
  EXPECT_EQ(positions.front(), (TargetPosition{2, 200}));
  EXPECT_EQ(positions.back(), (TargetPosition{2, 239}));
}

TEST(ForecastMask, TwoChannelsAreAdditive) {
  auto w = random_window(6, 240, 1);
  w.observed(3, 235) = false;  // inference may target genuinely missing values
  const auto mask = forecast_mask(w, {0, 3}, 10);
  EXPECT_EQ(mask.count(), 20);
  EXPECT_TRUE(mask.target.row(0).tail(10).all());
  EXPECT_TRUE(mask.target.row(3).tail(10).all());
  EXPECT_EQ(mask_to_json(mask), nlohmann::json::parse("[[0,230,240],[3,230,240]]"));
}

TEST(ForecastMask, ZeroHorizonIsEmpty) {
  const auto mask = forecast_mask(random_window(6, 240, 1), {1}, 0);
  EXPECT_TRUE(mask.empty());
  EXPECT_TRUE(mask.positions().empty());
}

TEST(ForecastMask, Errors) {
  const auto w = random_window(6, 240, 1);
  auto code = [&](std::vector<int> channels, int horizon) {
    try {
      forecast_mask(w, channels, horizon);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::IoError;
  };
  EXPECT_EQ(code({5}, 10), Errc::RainChannelTargeted);
  EXPECT_EQ(code({1}, 241), Errc::HorizonTooLarge);
  EXPECT_EQ(code({1}, -1), Errc::HorizonTooLarge);
}

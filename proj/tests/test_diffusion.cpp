#include "hydrocast/diffusion.hpp"
#include "hydrocast/error.hpp"
#include "hydrocast/normalize.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace hydrocast;
using hydrocast::testing::random_window;
using hydrocast::testing::temp_dir;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::IoError;
}

DenoiserParams<float> trained_looking(const Architecture& arch, std::uint64_t seed) {
  auto p = init_params<double>(arch, seed);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < p.out_w.size(); ++i) p.out_w.data()[i] = 0.3 * rng.normal();
  return p.cast<float>();
}

}  // namespace

TEST(Schedule, TwoStepExample) {
  const auto s = build_schedule(2, 0.1, 0.2);
  EXPECT_NEAR(s.beta_at(1), 0.1, 1e-15);
  EXPECT_NEAR(s.beta_at(2), 0.2, 1e-15);
  EXPECT_NEAR(s.alpha_bar_at(1), 0.9, 1e-15);
  EXPECT_NEAR(s.alpha_bar_at(2), 0.72, 1e-15);
}

TEST(Schedule, SingleStep) {
  const auto s = build_schedule(1, 0.03, 0.5);
  EXPECT_EQ(s.steps, 1);
  EXPECT_DOUBLE_EQ(s.beta_at(1), 0.03);
  EXPECT_DOUBLE_EQ(s.alpha_bar_at(1), 0.97);
}

TEST(Schedule, DefaultsCorruptAlmostCompletely) {
  const auto s = build_schedule();
  double product = 1.0;
  for (int t = 1; t <= 50; ++t) {
    const double root = std::sqrt(1e-4) + (t - 1) / 49.0 * (std::sqrt(0.5) - std::sqrt(1e-4));
    EXPECT_NEAR(s.beta_at(t), root * root, 1e-15);
    product *= 1.0 - root * root;
  }
  EXPECT_NEAR(s.alpha_bar_at(50), product, 1e-15);
  EXPECT_LT(s.alpha_bar_at(50), 0.01);
}

TEST(Schedule, InvariantsOverValidParameters) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = rng.uniform_int(1, 200);
    const double lo = std::exp(-9.0 * rng.uniform()) * 0.5;
    const double hi = lo + (0.999 - lo) * rng.uniform();
    const auto s = build_schedule(T, lo, hi);
    for (int t = 1; t <= T; ++t) {
      EXPECT_GT(s.beta_at(t), 0.0);
      EXPECT_LT(s.beta_at(t), 1.0);
      EXPECT_DOUBLE_EQ(s.alpha_at(t), 1.0 - s.beta_at(t));
      if (t > 1) {
        EXPECT_GE(s.beta_at(t), s.beta_at(t - 1));
        EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
        EXPECT_NEAR(s.alpha_at(t) * s.alpha_bar_at(t - 1), s.alpha_bar_at(t), 1e-15);
      }
    }
    EXPECT_LT(s.alpha_bar_at(1), 1.0);
  }
}

TEST(Schedule, RejectsInvalidRanges) {
  EXPECT_EQ(code_of([] { build_schedule(0, 0.1, 0.2); }), Errc::InvalidRange);
  EXPECT_EQ(code_of([] { build_schedule(5, 0.0, 0.2); }), Errc::InvalidRange);
  EXPECT_EQ(code_of([] { build_schedule(5, 0.3, 0.2); }), Errc::InvalidRange);
  EXPECT_EQ(code_of([] { build_schedule(5, 0.1, 1.0); }), Errc::InvalidRange);
}

TEST(ForwardNoise, ClosedForm) {
  const auto s = build_schedule(2, 0.1, 0.1);  // abar_2 = 0.81
  ASSERT_NEAR(s.alpha_bar_at(2), 0.81, 1e-15);
  const std::vector<double> one{1.0};
  EXPECT_NEAR(forward_noise(one, 2, one, s)[0], 0.9 + std::sqrt(0.19), 1e-12);
  EXPECT_NEAR(forward_noise(one, 2, one, s)[0], 1.33589, 1e-5);

  const std::vector<double> x0{0.5, -2.0, 3.0};
  const std::vector<double> zero(3, 0.0);
  const std::vector<double> eps{1.0, 0.2, -0.7};
  for (int t = 1; t <= 2; ++t) {
    const auto noiseless = forward_noise(x0, t, zero, s);
    const auto pure = forward_noise(zero, t, eps, s);
    for (int i = 0; i < 3; ++i) {
      EXPECT_DOUBLE_EQ(noiseless[i], std::sqrt(s.alpha_bar_at(t)) * x0[i]);
      EXPECT_DOUBLE_EQ(pure[i], std::sqrt(1 - s.alpha_bar_at(t)) * eps[i]);
    }
  }
  EXPECT_EQ(code_of([&] { forward_noise(one, 3, one, s); }), Errc::StepOutOfRange);
  EXPECT_EQ(code_of([&] { forward_noise(one, 0, one, s); }), Errc::StepOutOfRange);
  EXPECT_EQ(code_of([&] { forward_noise(x0, 1, one, s); }), Errc::LengthMismatch);
}

TEST(ReverseSample, SingleStepOracleInvertsForwardNoise) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = build_schedule(1, 0.01 + 0.9 * rng.uniform(), 0.95);
    std::vector<double> x0(7), eps(7);
    for (int i = 0; i < 7; ++i) {
      x0[i] = 3 * rng.normal();
      eps[i] = rng.normal();
    }
    const auto x1 = forward_noise(x0, 1, eps, s);
    // Start the chain at x1 by making the predictor report the injected noise
    // relative to whatever start point the sampler drew.
    NoisePredictor oracle = [&](std::span<const double> x, int, std::span<double> out) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (x[i] - std::sqrt(s.alpha_bar_at(1)) * x0[i]) / std::sqrt(1 - s.alpha_bar_at(1));
      }
    };
    const auto out = reverse_sample(oracle, 7, s, trial);
    for (int i = 0; i < 7; ++i) {
      EXPECT_NEAR(out[i], x0[i], 1e-9);
      const double inverted = (x1[i] - std::sqrt(1 - s.alpha_bar_at(1)) * eps[i]) / std::sqrt(s.alpha_bar_at(1));
      EXPECT_NEAR(inverted, x0[i], 1e-9);
    }
  }
}

TEST(ReverseSample, MultiStepOracleRecoversSignal) {
  const auto s = build_schedule(50, 1e-4, 0.5);
  const std::vector<double> x0{0.3, -1.2, 2.5, 0.0};
  NoisePredictor oracle = [&](std::span<const double> x, int t, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] = (x[i] - std::sqrt(s.alpha_bar_at(t)) * x0[i]) / std::sqrt(1 - s.alpha_bar_at(t));
    }
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = reverse_sample(oracle, x0.size(), s, seed);
    for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(out[i], x0[i], 1e-6);
  }
}

TEST(ReverseSample, GaussianToyMatchesPropagatedMoments) {
  const auto s = build_schedule(50, 1e-4, 0.5);
  const oracle::GaussianToy toy{0.7, 0.25};
  NoisePredictor predictor = [&](std::span<const double> x, int t, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = toy.posterior_eps(x[i], t, s);
  };
  const auto draws = reverse_sample(predictor, 10000, s, 123);
  double mean = 0.0;
  for (const double d : draws) mean += d;
  mean /= draws.size();
  double var = 0.0;
  for (const double d : draws) var += (d - mean) * (d - mean);
  var /= draws.size() - 1;

  const auto [m, v] = toy.chain_moments(s);
  const double n = static_cast<double>(draws.size());
  EXPECT_LT(std::abs(mean - m), 3.0 * std::sqrt(v / n));
  EXPECT_LT(std::abs(var - v), 3.0 * v * std::sqrt(2.0 / (n - 1)));
  // and the discretized chain lands near the data law itself
  EXPECT_NEAR(m, toy.mu, 0.02);
  EXPECT_NEAR(v, toy.s2, 0.05);
}

TEST(ReverseSample, DeterministicAndRejectsEmptyMask) {
  const Architecture arch{4, 8, 1, 1, 10};
  const auto params = trained_looking(arch, 3);
  const auto w = random_window(4, 32, 1);
  const auto mask = forecast_mask(w, {1}, 6);
  const auto s = build_schedule(10, 1e-4, 0.5);
  EXPECT_EQ(reverse_sample(params, w, mask, s, 9), reverse_sample(params, w, mask, s, 9));
  EXPECT_NE(reverse_sample(params, w, mask, s, 9), reverse_sample(params, w, mask, s, 10));
  EXPECT_EQ(code_of([&] { reverse_sample(params, w, Mask(4, 32), s, 1); }), Errc::EmptyTarget);
  EXPECT_EQ(code_of([&] { reverse_sample(params, w, mask, build_schedule(11, 1e-4, 0.5), 1); }),
            Errc::StepOutOfRange);
}

class SampleN : public ::testing::Test {
 protected:
  Architecture arch{4, 8, 1, 1, 10};
  DenoiserParams<float> params = trained_looking(arch, 5);
  TimeSeriesWindow physical = random_window(4, 32, 2);
  NormalizationStats stats = fit_normalizer(std::vector<TimeSeriesWindow>{random_window(4, 32, 3)});
  TimeSeriesWindow window = normalize(physical, stats);
  Mask mask = forecast_mask(window, {0, 2}, 5);
  NoiseSchedule schedule = build_schedule(10, 1e-4, 0.5);
};

TEST_F(SampleN, SingleChainMatchesReverseSample) {
  const auto samples = sample_n(params, window, mask, schedule, 1, 77, stats);
  const auto direct = reverse_sample(params, window, mask, schedule, 77);
  ASSERT_EQ(samples.sample_count(), 1);
  ASSERT_EQ(samples.target_count(), 10);
  for (int j = 0; j < 10; ++j) {
    EXPECT_DOUBLE_EQ(samples.values(0, j), stats.invert(samples.positions[j].channel, direct[j]));
  }
}

TEST_F(SampleN, HundredDistinctChains) {
  const auto samples = sample_n(params, window, mask, schedule, 100, 1, stats);
  std::set<std::vector<double>> rows;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> r;
    for (int j = 0; j < samples.target_count(); ++j) r.push_back(samples.values(i, j));
    rows.insert(r);
  }
  EXPECT_EQ(rows.size(), 100u);
}

TEST_F(SampleN, ThreadCountDoesNotChangeOutput) {
  const auto one = sample_n(params, window, mask, schedule, 13, 4, stats, 1);
  for (const int threads : {2, 3, 8, 20}) {
    const auto many = sample_n(params, window, mask, schedule, 13, 4, stats, threads);
    EXPECT_EQ(many.values, one.values) << threads << " threads";
  }
}

TEST_F(SampleN, ContextIsUntouched) {
  const auto before = window;
  sample_n(params, window, mask, schedule, 3, 4, stats);
  EXPECT_EQ(window.values, before.values);
  EXPECT_TRUE((window.observed == before.observed).all());
}

TEST_F(SampleN, EmptyMaskYieldsNoColumns) {
  const auto samples = sample_n(params, window, forecast_mask(window, {1}, 0), schedule, 5, 4, stats);
  EXPECT_EQ(samples.sample_count(), 5);
  EXPECT_EQ(samples.target_count(), 0);
}

TEST_F(SampleN, CsvDump) {
  const auto dir = temp_dir("samples_csv");
  const auto samples = sample_n(params, window, mask, schedule, 2, 4, stats);
  write_samples_csv(dir / "s.csv", samples);
  std::ifstream in(dir / "s.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "sample_index,channel,timestep,value");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 20);
}

TEST(Train, EpochZeroLossAndDeterminism) {
  const Architecture arch{4, 8, 1, 1, 10};
  std::vector<TimeSeriesWindow> windows;
  for (std::uint64_t s = 0; s < 24; ++s) windows.push_back(random_window(4, 48, s));
  const auto schedule = build_schedule(10, 1e-4, 0.5);
  MaskSpec spec{1, 12, -1};
  TrainOptions options{3, 8, 5, 0};

  auto run = [&] {
    auto params = init_params<float>(arch, 1);
    auto opt = make_optimizer(params);
    auto history = train<float>(params, opt, windows, spec, schedule, options);
    return std::make_pair(history, params);
  };
  const auto [h1, p1] = run();
  const auto [h2, p2] = run();
  ASSERT_EQ(h1.size(), 4u);
  EXPECT_EQ(h1.front().epoch, 0);
  EXPECT_NEAR(h1.front().loss, 1.0, 0.25);
  for (std::size_t i = 0; i < h1.size(); ++i) EXPECT_EQ(h1[i].loss, h2[i].loss);
  EXPECT_EQ(p1.out_w, p2.out_w);
}

TEST(Train, ResumeContinuesBitExactly) {
  const Architecture arch{4, 8, 1, 1, 10};
  std::vector<TimeSeriesWindow> windows;
  for (std::uint64_t s = 0; s < 10; ++s) windows.push_back(random_window(4, 40, s));
  const auto schedule = build_schedule(10, 1e-4, 0.5);
  const MaskSpec spec{1, 10, -1};

  auto full = init_params<float>(arch, 2);
  auto full_opt = make_optimizer(full);
  const auto straight = train<float>(full, full_opt, windows, spec, schedule, TrainOptions{4, 4, 9, 0});

  const auto dir = temp_dir("resume");
  auto part = init_params<float>(arch, 2);
  auto part_opt = make_optimizer(part);
  train<float>(part, part_opt, windows, spec, schedule, TrainOptions{2, 4, 9, 0});
  save_params(part, dir / "w.json");
  save_optimizer(part_opt, dir / "a.json");
  auto loaded = load_params<float>(dir / "w.json");
  auto loaded_opt = load_optimizer<float>(dir / "a.json");
  const auto rest = train<float>(loaded, loaded_opt, windows, spec, schedule, TrainOptions{2, 4, 9, 2});

  ASSERT_EQ(rest.size(), 2u);
  EXPECT_EQ(rest[0].epoch, 3);
  EXPECT_EQ(rest[0].loss, straight[3].loss);
  EXPECT_EQ(rest[1].loss, straight[4].loss);
  EXPECT_EQ(loaded.out_w, full.out_w);
}

TEST(Train, Errors) {
  const Architecture arch{4, 8, 1, 1, 10};
  auto params = init_params<float>(arch, 1);
  auto opt = make_optimizer(params);
  const auto schedule = build_schedule(10, 1e-4, 0.5);
  EXPECT_EQ(code_of([&] { train<float>(params, opt, std::span<const TimeSeriesWindow>(), MaskSpec{}, schedule, {}); }),
            Errc::EmptyInput);
  const std::vector<TimeSeriesWindow> windows{random_window(4, 48, 1)};
  EXPECT_EQ(code_of([&] {
              train<float>(params, opt, windows, MaskSpec{}, build_schedule(20, 1e-4, 0.5), TrainOptions{1, 1, 1, 0});
            }),
            Errc::InvalidConfig);
}

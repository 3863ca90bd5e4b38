#include "hydrocast/denoiser.hpp"
#include "hydrocast/error.hpp"
#include "hydrocast/rng.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <thread>

using namespace hydrocast;
using hydrocast::testing::random_window;
using hydrocast::testing::temp_dir;

namespace {

/// Weight count written out from the block definitions: input lanes and
/// channel embedding, step MLP, per-block attention (Q, K, V, O) with its
/// norm, per-block channel mix and feature MLP with its norm, output head.
std::size_t closed_form_count(std::size_t K, std::size_t d, std::size_t R) {
  const std::size_t input = 3 * d + K * d;
  const std::size_t step = 2 * (d * d + d);
  const std::size_t attention = 2 * d + 4 * (d * d + d);
  const std::size_t mixing = 2 * d + K * K + 2 * (d * d + d);
  const std::size_t output = 2 * d + d + 1;
  return input + step + R * (attention + mixing) + output;
}

template <typename S>
bool identical(const DenoiserParams<S>& a, const DenoiserParams<S>& b) {
  const auto x = a.tensors();
  const auto y = b.tensors();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (*x[i].second != *y[i].second) return false;
  }
  return true;
}

DenoiserParams<double> with_random_head(const Architecture& arch, std::uint64_t seed) {
  auto p = init_params<double>(arch, seed);
  Rng rng(seed + 1);
  for (Eigen::Index i = 0; i < p.out_w.size(); ++i) p.out_w.data()[i] = rng.normal();
  return p;
}

Mask suffix_mask(int K, int L, int channel, int h) {
  Mask m(K, L);
  m.target.row(channel).tail(h).setConstant(true);
  return m;
}

}  // namespace

TEST(Params, CountMatchesClosedForm) {
  EXPECT_EQ(closed_form_count(6, 64, 2), 59593u);
  for (const auto& arch : {Architecture{6, 64, 2, 1, 50}, Architecture{3, 8, 1, 1, 10}, Architecture{4, 16, 3, 4, 20}}) {
    const auto expected = closed_form_count(arch.channels, arch.width, arch.blocks);
    EXPECT_EQ(parameter_count(arch), expected);
    EXPECT_EQ(init_params<float>(arch, 1).size(), expected);
  }
}

TEST(Params, SeededInitialization) {
  const Architecture arch{6, 16, 2, 1, 50};
  EXPECT_TRUE(identical(init_params<float>(arch, 7), init_params<float>(arch, 7)));
  EXPECT_FALSE(identical(init_params<float>(arch, 7), init_params<float>(arch, 8)));
  const auto p = init_params<double>(arch, 7);
  EXPECT_TRUE(p.out_w.isZero(0.0));
  EXPECT_TRUE(p.out_b.isZero(0.0));
  for (const auto& [name, t] : p.tensors()) EXPECT_TRUE(t->allFinite()) << name;
  // hidden weights scaled by 1/sqrt(fan_in)
  const double var = p.blocks[0].wq.array().square().mean();
  EXPECT_NEAR(var, 1.0 / 16, 0.35 / 16);
}

TEST(Params, InvalidShapes) {
  for (const auto& arch : {Architecture{1, 8, 1, 1, 10}, Architecture{3, 3, 1, 1, 10}, Architecture{3, 8, 0, 1, 10},
                           Architecture{3, 8, 1, 3, 10}}) {
    try {
      init_params<float>(arch, 1);
      ADD_FAILURE() << "accepted an invalid architecture";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidShape);
    }
  }
}

TEST(PredictNoise, ZeroHeadGivesZero) {
  const Architecture arch{6, 16, 2, 1, 50};
  const auto params = init_params<float>(arch, 3);
  const auto w = random_window(6, 48, 1);
  const auto mask = suffix_mask(6, 48, 2, 10);
  const std::vector<float> noisy(10, 0.7f);
  const auto eps = predict_noise<float>(params, w, mask, noisy, 12);
  ASSERT_EQ(eps.size(), 10u);
  for (const float e : eps) EXPECT_EQ(e, 0.0f);
}

TEST(PredictNoise, OutputLengthIsTargetCount) {
  const Architecture arch{4, 8, 1, 2, 10};
  const auto params = with_random_head(arch, 5);
  const auto w = random_window(4, 20, 2);
  Mask one(4, 20);
  one.target(1, 19) = true;
  EXPECT_EQ(predict_noise<double>(params, w, one, std::vector<double>{0.3}, 4).size(), 1u);
  const auto many = suffix_mask(4, 20, 0, 7);
  EXPECT_EQ(predict_noise<double>(params, w, many, std::vector<double>(7, 0.1), 4).size(), 7u);
}

TEST(PredictNoise, PositionEncodingBreaksTimeSymmetry) {
  const Architecture arch{4, 16, 2, 1, 20};
  const auto params = with_random_head(arch, 9);
  const auto w = random_window(4, 32, 4);
  const auto mask = suffix_mask(4, 32, 1, 5);
  std::vector<double> noisy{0.1, -0.2, 0.3, 0.0, 1.0};

  auto swapped = w;
  swapped.values.col(3).swap(swapped.values.col(17));
  const auto a = predict_noise<double>(params, w, mask, noisy, 6);
  const auto b = predict_noise<double>(params, swapped, mask, noisy, 6);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(PredictNoise, UnobservedAndTargetValuesAreNotRead) {
  const Architecture arch{4, 8, 1, 1, 10};
  const auto params = with_random_head(arch, 2);
  auto w = random_window(4, 24, 5);
  w.observed(0, 4) = false;
  const auto mask = suffix_mask(4, 24, 2, 6);
  const std::vector<double> noisy(6, 0.25);
  const auto base = predict_noise<double>(params, w, mask, noisy, 3);
  w.values(0, 4) = 1e6;                  // sentinel slot
  w.values.row(2).tail(6).setConstant(-42.0);  // hidden truth
  EXPECT_EQ(predict_noise<double>(params, w, mask, noisy, 3), base);
}

TEST(PredictNoise, Errors) {
  const Architecture arch{4, 8, 1, 1, 10};
  const auto params = init_params<double>(arch, 1);
  const auto w = random_window(4, 24, 5);
  const auto mask = suffix_mask(4, 24, 1, 3);
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::IoError;
  };
  EXPECT_EQ(code([&] { predict_noise<double>(params, w, mask, std::vector<double>(3), 0); }), Errc::StepOutOfRange);
  EXPECT_EQ(code([&] { predict_noise<double>(params, w, mask, std::vector<double>(3), 11); }), Errc::StepOutOfRange);
  EXPECT_EQ(code([&] { predict_noise<double>(params, w, mask, std::vector<double>(2), 1); }), Errc::ShapeMismatch);
  EXPECT_EQ(code([&] { predict_noise<double>(params, random_window(5, 24, 1), suffix_mask(5, 24, 1, 3),
                                             std::vector<double>(3), 1); }),
            Errc::ShapeMismatch);
}

TEST(PredictNoise, ConcurrentCallsMatchSequential) {
  const Architecture arch{6, 16, 2, 1, 50};
  const auto head = with_random_head(arch, 4).cast<float>();
  const auto w = random_window(6, 64, 8);
  const auto mask = suffix_mask(6, 64, 0, 16);
  std::vector<std::vector<float>> inputs(8, std::vector<float>(16));
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 16; ++j) inputs[i][j] = 0.1f * static_cast<float>(i - j);
  }
  std::vector<std::vector<float>> sequential(8);
  for (int i = 0; i < 8; ++i) sequential[i] = predict_noise<float>(head, w, mask, inputs[i], 1 + i);
  std::vector<std::vector<float>> parallel(8);
  {
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) {
      threads.emplace_back([&, i] { parallel[i] = predict_noise<float>(head, w, mask, inputs[i], 1 + i); });
    }
  }
  EXPECT_EQ(parallel, sequential);
}

TEST(Loss, ZeroInitLossIsMeanNoiseEnergy) {
  const Architecture arch{6, 16, 1, 1, 50};
  const auto params = init_params<double>(arch, 1);
  const auto w = random_window(6, 240, 3);
  const auto mask = suffix_mask(6, 240, 0, 40);
  Rng rng(77);
  std::vector<TrainingExample<double>> batch(128);  // 5120 target values
  double energy = 0.0;
  for (auto& ex : batch) {
    ex.window = &w;
    ex.mask = &mask;
    ex.step = rng.uniform_int(1, 50);
    for (int i = 0; i < 40; ++i) {
      ex.noise.push_back(rng.normal());
      ex.noisy.push_back(rng.normal());
      energy += ex.noise.back() * ex.noise.back();
    }
  }
  DenoiserWorkspace<double> ws;
  const double loss = loss_only<double>(params, batch, ws);
  EXPECT_NEAR(loss, energy / (128 * 40), 1e-12);
  EXPECT_NEAR(loss, 1.0, 0.1);
}

TEST(Loss, PerfectPredictionHasZeroLossAndGradient) {
  const Architecture arch{4, 8, 1, 1, 10};
  const auto params = init_params<double>(arch, 2);  // predicts exactly zero
  const auto w = random_window(4, 24, 3);
  const auto mask = suffix_mask(4, 24, 1, 5);
  TrainingExample<double> ex{&w, &mask, 4, std::vector<double>(5, 0.0), std::vector<double>{0.3, -1, 2, 0.5, 0.1}};
  DenoiserWorkspace<double> ws;
  DenoiserParams<double> grads;
  EXPECT_EQ(loss_and_grad<double>(params, std::span(&ex, 1), grads, ws), 0.0);
  for (const auto& [name, g] : grads.tensors()) EXPECT_TRUE(g->isZero(0.0)) << name;
}

TEST(Loss, Errors) {
  const Architecture arch{4, 8, 1, 1, 10};
  const auto params = init_params<double>(arch, 2);
  const auto w = random_window(4, 24, 3);
  const Mask empty(4, 24);
  TrainingExample<double> ex{&w, &empty, 1, {}, {}};
  DenoiserWorkspace<double> ws;
  DenoiserParams<double> grads;
  try {
    loss_and_grad<double>(params, std::span(&ex, 1), grads, ws);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyTarget);
  }
  EXPECT_THROW(loss_and_grad<double>(params, std::span<const TrainingExample<double>>(), grads, ws), Error);
}

TEST(Gradient, MatchesCentralDifferences) {
  const auto report = oracle::check_gradients(Architecture{3, 8, 1, 1, 10}, 16, 11);
  EXPECT_EQ(report.coordinates, parameter_count(Architecture{3, 8, 1, 1, 10}));
  EXPECT_LE(report.worst_relative, 1e-4) << "worst tensor " << report.worst_tensor;
}

TEST(Gradient, MatchesCentralDifferencesMultiHeadTwoBlocks) {
  const auto report = oracle::check_gradients(Architecture{4, 8, 2, 2, 10}, 12, 12);
  EXPECT_LE(report.worst_relative, 1e-4) << "worst tensor " << report.worst_tensor;
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  const Architecture arch{3, 8, 1, 1, 10};
  auto params = init_params<double>(arch, 1);
  const auto before = params;
  auto state = make_optimizer(params);
  const auto zero = DenoiserParams<double>::zeros(arch);
  for (int i = 0; i < 5; ++i) optimizer_step(params, zero, state);
  EXPECT_TRUE(identical(params, before));
  EXPECT_EQ(state.step, 5);
}

TEST(Adam, FirstStepMovesEveryCoordinateByLearningRate) {
  const Architecture arch{3, 8, 1, 1, 10};
  auto params = init_params<double>(arch, 1);
  const auto before = params;
  auto state = make_optimizer(params);
  auto grads = DenoiserParams<double>::zeros(arch);
  for (auto& [name, g] : grads.tensors()) g->setConstant(1.0);
  grads.out_b(0, 0) = -3.0;
  optimizer_step(params, grads, state);
  const auto p = params.tensors();
  const auto q = before.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool bias = p[i].first == "output.b";
    const double sign = bias ? 1.0 : -1.0;
    const double g = bias ? 3.0 : 1.0;
    const Mat<double> delta = *p[i].second - *q[i].second;
    // m_hat / sqrt(v_hat) = |g| / (|g| + eps): lr up to the stability constant
    EXPECT_LE((delta.array() - sign * 1e-3 * g / (g + 1e-8)).abs().maxCoeff(), 1e-15) << p[i].first;
    EXPECT_LE((delta.array() - sign * 1e-3).abs().maxCoeff(), 1.1e-11) << p[i].first;
  }
}

TEST(Adam, MatchesReferenceRecursion) {
  const Architecture arch{3, 8, 1, 1, 10};
  auto params = init_params<double>(arch, 3);
  auto state = make_optimizer(params, 5e-3);
  Rng rng(4);
  std::vector<double> x(params.tensors()[0].second->data(), params.tensors()[0].second->data() + params.value_proj.size());
  std::vector<double> m(x.size(), 0.0), v(x.size(), 0.0);
  for (int step = 1; step <= 4; ++step) {
    auto grads = DenoiserParams<double>::zeros(arch);
    for (auto& [name, g] : grads.tensors()) {
      for (Eigen::Index i = 0; i < g->size(); ++i) g->data()[i] = rng.normal();
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = grads.value_proj.data()[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, step));
      const double vh = v[i] / (1 - std::pow(0.999, step));
      x[i] -= 5e-3 * mh / (std::sqrt(vh) + 1e-8);
    }
    optimizer_step(params, grads, state);
  }
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(params.value_proj.data()[i], x[i], 1e-14);
}

TEST(Adam, ShapeMismatch) {
  auto params = init_params<double>(Architecture{3, 8, 1, 1, 10}, 1);
  auto state = make_optimizer(params);
  const auto other = DenoiserParams<double>::zeros(Architecture{3, 12, 1, 1, 10});
  try {
    optimizer_step(params, other, state);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

TEST(Adam, HundredStepsAreBitIdentical) {
  const Architecture arch{4, 8, 1, 1, 10};
  const auto w = random_window(4, 24, 6);
  const auto mask = suffix_mask(4, 24, 1, 6);
  auto run = [&] {
    auto params = init_params<float>(arch, 5);
    auto state = make_optimizer(params);
    Rng rng(8);
    DenoiserWorkspace<float> ws;
    DenoiserParams<float> grads;
    for (int step = 0; step < 100; ++step) {
      TrainingExample<float> ex{&w, &mask, rng.uniform_int(1, 10), {}, {}};
      for (int i = 0; i < 6; ++i) {
        ex.noise.push_back(static_cast<float>(rng.normal()));
        ex.noisy.push_back(static_cast<float>(rng.normal()));
      }
      loss_and_grad<float>(params, std::span(&ex, 1), grads, ws);
      optimizer_step(params, grads, state);
    }
    return params;
  };
  const auto a = run();
  const auto b = run();
  EXPECT_TRUE(identical(a, b));
  EXPECT_FALSE(a.out_w.isZero(0.0f));
}

TEST(Persistence, RoundTripAndManifest) {
  const auto dir = temp_dir("weights");
  const Architecture arch{6, 16, 2, 2, 50};
  auto params = with_random_head(arch, 3).cast<float>();
  save_params(params, dir / "weights.json");
  const auto back = load_params<float>(dir / "weights.json");
  EXPECT_EQ(back.arch, arch);
  EXPECT_TRUE(identical(back, params));

  std::ifstream in(dir / "weights.json");
  const auto manifest = nlohmann::json::parse(in);
  EXPECT_EQ(manifest.at("dtype"), "float32");
  EXPECT_EQ(manifest.at("byte_order"), "little");
  std::uint64_t offset = 0;
  for (const auto& t : manifest.at("tensors")) {
    EXPECT_EQ(t.at("offset").get<std::uint64_t>(), offset);
    offset += t.at("bytes").get<std::uint64_t>();
  }
  EXPECT_EQ(offset, 4 * parameter_count(arch));
  EXPECT_EQ(std::filesystem::file_size(dir / "weights.bin"), offset);

  // first stored float is the first value_proj entry, little-endian
  std::ifstream blob(dir / "weights.bin", std::ios::binary);
  unsigned char bytes[4];
  blob.read(reinterpret_cast<char*>(bytes), 4);
  const std::uint32_t bits = bytes[0] | (bytes[1] << 8) | (bytes[2] << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
  EXPECT_EQ(std::bit_cast<float>(bits), params.value_proj(0, 0));
}

TEST(Persistence, OptimizerRoundTrip) {
  const auto dir = temp_dir("adam");
  const Architecture arch{4, 8, 1, 1, 10};
  auto params = init_params<float>(arch, 1);
  auto state = make_optimizer(params, 2e-3);
  auto grads = DenoiserParams<float>::zeros(arch);
  for (auto& [name, g] : grads.tensors()) g->setConstant(0.5f);
  optimizer_step(params, grads, state);
  save_optimizer(state, dir / "adam.json");
  const auto back = load_optimizer<float>(dir / "adam.json");
  EXPECT_EQ(back.step, 1);
  EXPECT_EQ(back.learning_rate, 2e-3);
  EXPECT_TRUE(identical(back.first_moment, state.first_moment));
  EXPECT_TRUE(identical(back.second_moment, state.second_moment));
}

TEST(Persistence, RejectsMismatchedManifest) {
  const auto dir = temp_dir("weights_bad");
  save_params(init_params<float>(Architecture{4, 8, 1, 1, 10}, 1), dir / "w.json");
  std::ifstream in(dir / "w.json");
  auto manifest = nlohmann::json::parse(in);
  manifest["tensors"][0]["shape"] = {2, 8};
  std::ofstream(dir / "w.json") << manifest.dump();
  try {
    load_params<float>(dir / "w.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

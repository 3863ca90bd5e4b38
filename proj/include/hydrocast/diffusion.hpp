#pragma once

#include "hydrocast/denoiser.hpp"
#include "hydrocast/masking.hpp"
#include "hydrocast/normalize.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace hydrocast {

/// DDPM variance schedule. Sequences are stored 0-based: beta[t - 1] is beta_t.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double beta_at(int t) const { return beta[t - 1]; }
  double alpha_at(int t) const { return alpha[t - 1]; }
  double alpha_bar_at(int t) const { return alpha_bar[t - 1]; }
};

/// beta_t interpolates linearly in sqrt(beta) from beta_min to beta_max.
/// Throws InvalidRange.
NoiseSchedule build_schedule(int steps = 50, double beta_min = 1e-4, double beta_max = 0.5);

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * noise. Throws StepOutOfRange, LengthMismatch.
std::vector<double> forward_noise(std::span<const double> x0, int t, std::span<const double> noise,
                                  const NoiseSchedule& schedule);

struct TrainOptions {
  int epochs = 20;
  int batch_size = 16;
  std::uint64_t seed = 1;
  /// Epochs already completed by `params`; training resumes with epoch start_epoch + 1.
  int start_epoch = 0;
};

struct EpochLoss {
  int epoch = 0;
  double loss = 0.0;
};

/// Self-supervised training on normalized windows. Epoch e draws its
/// shuffling, masks, steps and noise from a stream seeded by (seed, e), so a
/// run resumed from saved weights and optimizer state continues bit-exactly.
///
/// When start_epoch == 0 the history opens with an epoch-0 entry: the loss of
/// the untrained parameters on epoch 1's draws.
template <typename S>
std::vector<EpochLoss> train(DenoiserParams<S>& params, OptimizerState<S>& optimizer,
                             std::span<const TimeSeriesWindow> windows, const MaskSpec& spec,
                             const NoiseSchedule& schedule, const TrainOptions& options,
                             const std::function<void(const EpochLoss&)>& on_epoch = {});

/// Noise estimate for the current targets at step t; writes into `out`.
using NoisePredictor = std::function<void(std::span<const double> noisy, int step, std::span<double> out)>;

/// Ancestral sampling: start from N(0, I) and apply
/// x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) * eps) / sqrt(alpha_t) + sqrt(beta_t) * z
/// for t = T..1, with z = 0 on the last step.
std::vector<double> reverse_sample(const NoisePredictor& predictor, std::size_t count, const NoiseSchedule& schedule,
                                   std::uint64_t seed);

/// One imputation of the mask's targets in normalized units. The window is
/// only read. Throws EmptyTarget.
std::vector<double> reverse_sample(const DenoiserParams<float>& params, const TimeSeriesWindow& normalized,
                                   const Mask& mask, const NoiseSchedule& schedule, std::uint64_t seed);

/// N imputations of one window, physical units.
struct ImputationSamples {
  std::int64_t window_start = 0;
  std::vector<std::string> channel_names;
  std::vector<TargetPosition> positions;
  Eigen::MatrixXd values;  // N x positions.size()

  int sample_count() const { return static_cast<int>(values.rows()); }
  int target_count() const { return static_cast<int>(values.cols()); }
};

/// Chain i uses seed + i; rows are ordered by chain index whatever `threads` is.
/// An empty mask yields N x 0 samples.
ImputationSamples sample_n(const DenoiserParams<float>& params, const TimeSeriesWindow& normalized, const Mask& mask,
                           const NoiseSchedule& schedule, int count, std::uint64_t seed,
                           const NormalizationStats& stats, int threads = 1);

/// CSV with columns sample_index,channel,timestep,value.
void write_samples_csv(const std::filesystem::path& path, const ImputationSamples& samples);

}  // namespace hydrocast

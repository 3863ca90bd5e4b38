#include "hydrocast/diffusion.hpp"

#include "hydrocast/error.hpp"
#include "hydrocast/rng.hpp"

#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <string>
#include <thread>

namespace hydrocast {

NoiseSchedule build_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 1 || !(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    throw Error(Errc::InvalidRange, "schedule needs T >= 1 and 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  const double lo = std::sqrt(beta_min);
  const double hi = std::sqrt(beta_max);
  double product = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double root = steps == 1 ? lo : lo + (hi - lo) * i / (steps - 1);
    s.beta[i] = steps == 1 ? beta_min : root * root;
    s.alpha[i] = 1.0 - s.beta[i];
    product *= s.alpha[i];
    s.alpha_bar[i] = product;
  }
  return s;
}

std::vector<double> forward_noise(std::span<const double> x0, int t, std::span<const double> noise,
                                  const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps) throw Error(Errc::StepOutOfRange, "step " + std::to_string(t));
  if (x0.size() != noise.size()) throw Error(Errc::LengthMismatch, "x0 and noise differ in length");
  const double signal = std::sqrt(schedule.alpha_bar_at(t));
  const double spread = std::sqrt(1.0 - schedule.alpha_bar_at(t));
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = signal * x0[i] + spread * noise[i];
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct EpochDraws {
  std::vector<std::size_t> order;
  Rng rng;

  EpochDraws(std::size_t n, std::uint64_t seed, int epoch) : order(n), rng(derive_seed(seed, epoch)) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
  }
};

/// Fills `examples` and `masks` for one batch drawn from `draws`.
template <typename S>
void draw_batch(std::span<const TimeSeriesWindow> windows, std::span<const std::size_t> indices, const MaskSpec& spec,
                const NoiseSchedule& schedule, Rng& rng, std::vector<Mask>& masks,
                std::vector<TrainingExample<S>>& examples) {
  masks.resize(indices.size());
  examples.resize(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& window = windows[indices[b]];
    masks[b] = training_mask(window, spec, rng);
    auto& ex = examples[b];
    ex.window = &window;
    ex.mask = &masks[b];
    ex.step = rng.uniform_int(1, schedule.steps);
    const auto positions = masks[b].positions();
    std::vector<double> x0(positions.size());
    std::vector<double> noise(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
      x0[i] = window.values(positions[i].channel, positions[i].step);
      noise[i] = rng.normal();
    }
    const auto noisy = forward_noise(x0, ex.step, noise, schedule);
    ex.noise.assign(noise.begin(), noise.end());
    ex.noisy.assign(noisy.begin(), noisy.end());
  }
}

}  // namespace

template <typename S>
std::vector<EpochLoss> train(DenoiserParams<S>& params, OptimizerState<S>& optimizer,
                             std::span<const TimeSeriesWindow> windows, const MaskSpec& spec,
                             const NoiseSchedule& schedule, const TrainOptions& options,
                             const std::function<void(const EpochLoss&)>& on_epoch) {
  if (windows.empty()) throw Error(Errc::EmptyInput, "no training windows");
  if (options.batch_size < 1 || options.epochs < 0 || options.start_epoch < 0) {
    throw Error(Errc::InvalidConfig, "batch_size must be >= 1 and epochs >= 0");
  }
  if (schedule.steps > params.arch.diffusion_steps) {
    throw Error(Errc::InvalidConfig, "schedule has more steps than the model accepts");
  }

  DenoiserWorkspace<S> workspace;
  DenoiserParams<S> grads;
  std::vector<Mask> masks;
  std::vector<TrainingExample<S>> examples;
  std::vector<EpochLoss> history;
  const std::size_t n = windows.size();
  const auto batch = static_cast<std::size_t>(options.batch_size);

  auto run_epoch = [&](int epoch, bool update) {
    EpochDraws draws(n, options.seed, epoch == 0 ? 1 : epoch);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const auto indices = std::span<const std::size_t>(draws.order).subspan(begin, std::min(batch, n - begin));
      draw_batch<S>(windows, indices, spec, schedule, draws.rng, masks, examples);
      if (update) {
        total += loss_and_grad<S>(params, examples, grads, workspace);
        optimizer_step(params, grads, optimizer);
      } else {
        total += loss_only<S>(params, examples, workspace);
      }
      ++batches;
    }
    EpochLoss record{epoch, total / static_cast<double>(batches)};
    history.push_back(record);
    if (on_epoch) on_epoch(record);
  };

  if (options.start_epoch == 0) run_epoch(0, false);
  for (int e = options.start_epoch + 1; e <= options.start_epoch + options.epochs; ++e) run_epoch(e, true);
  return history;
}

template std::vector<EpochLoss> train<float>(DenoiserParams<float>&, OptimizerState<float>&,
                                             std::span<const TimeSeriesWindow>, const MaskSpec&, const NoiseSchedule&,
                                             const TrainOptions&, const std::function<void(const EpochLoss&)>&);
template std::vector<EpochLoss> train<double>(DenoiserParams<double>&, OptimizerState<double>&,
                                              std::span<const TimeSeriesWindow>, const MaskSpec&,
                                              const NoiseSchedule&, const TrainOptions&,
                                              const std::function<void(const EpochLoss&)>&);

// ---------------------------------------------------------------------------
// Sampling

std::vector<double> reverse_sample(const NoisePredictor& predictor, std::size_t count, const NoiseSchedule& schedule,
                                   std::uint64_t seed) {
  if (count == 0) throw Error(Errc::EmptyTarget, "nothing to sample");
  Rng rng(seed);
  std::vector<double> x(count);
  for (auto& v : x) v = rng.normal();
  std::vector<double> eps(count);
  for (int t = schedule.steps; t >= 1; --t) {
    predictor(x, t, eps);
    const double beta = schedule.beta_at(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha_at(t));
    const double eps_scale = beta / std::sqrt(1.0 - schedule.alpha_bar_at(t));
    const double sigma = t > 1 ? std::sqrt(beta) : 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      x[i] = (x[i] - eps_scale * eps[i]) * inv_sqrt_alpha;
      if (t > 1) x[i] += sigma * rng.normal();
    }
  }
  return x;
}

std::vector<double> reverse_sample(const DenoiserParams<float>& params, const TimeSeriesWindow& normalized,
                                   const Mask& mask, const NoiseSchedule& schedule, std::uint64_t seed) {
  if (mask.empty()) throw Error(Errc::EmptyTarget, "forecast mask is empty");
  if (schedule.steps > params.arch.diffusion_steps) {
    throw Error(Errc::StepOutOfRange, "schedule has more steps than the model accepts");
  }
  DenoiserWorkspace<float> workspace;
  std::vector<float> noisy(static_cast<std::size_t>(mask.count()));
  NoisePredictor predictor = [&](std::span<const double> x, int t, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) noisy[i] = static_cast<float>(x[i]);
    const auto eps = predict_noise<float>(params, normalized, mask, noisy, t, workspace);
    for (std::size_t i = 0; i < eps.size(); ++i) out[i] = eps[i];
  };
  return reverse_sample(predictor, noisy.size(), schedule, seed);
}

ImputationSamples sample_n(const DenoiserParams<float>& params, const TimeSeriesWindow& normalized, const Mask& mask,
                           const NoiseSchedule& schedule, int count, std::uint64_t seed,
                           const NormalizationStats& stats, int threads) {
  if (count < 1) throw Error(Errc::InvalidConfig, "sample count must be >= 1");
  ImputationSamples out;
  out.window_start = normalized.start_time;
  for (const auto& c : normalized.channels) out.channel_names.push_back(c.name);
  out.positions = mask.positions();
  out.values.resize(count, static_cast<Eigen::Index>(out.positions.size()));
  if (mask.empty()) return out;

  auto run = [&](int i) {
    const auto x = reverse_sample(params, normalized, mask, schedule, seed + static_cast<std::uint64_t>(i));
    for (std::size_t j = 0; j < x.size(); ++j) {
      out.values(i, static_cast<Eigen::Index>(j)) = stats.invert(out.positions[j].channel, x[j]);
    }
  };
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) run(i);
  } else {
    std::vector<std::exception_ptr> failures(workers);
    {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (int i = w; i < count; i += workers) run(i);
          } catch (...) {
            failures[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& failure : failures) {
      if (failure) std::rethrow_exception(failure);
    }
  }
  return out;
}

void write_samples_csv(const std::filesystem::path& path, const ImputationSamples& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << "sample_index,channel,timestep,value\n";
  char buf[64];
  for (int i = 0; i < samples.sample_count(); ++i) {
    for (int j = 0; j < samples.target_count(); ++j) {
      const auto& pos = samples.positions[j];
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), samples.values(i, j));
      out << i << ',' << samples.channel_names[pos.channel] << ',' << pos.step << ',';
      out.write(buf, ptr - buf);
      out << '\n';
    }
  }
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

}  // namespace hydrocast

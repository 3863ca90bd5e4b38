#pragma once

#include "hydrocast/masking.hpp"
#include "hydrocast/series.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hydrocast {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Shape hyperparameters of the noise-prediction network.
struct Architecture {
  int channels = 6;          // K
  int width = 64;            // d
  int blocks = 2;            // R
  int heads = 1;             // attention heads, must divide width
  int diffusion_steps = 50;  // largest accepted step index T

  /// Throws InvalidShape.
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

void to_json(nlohmann::json& j, const Architecture& a);
void from_json(const nlohmann::json& j, Architecture& a);

/// Number of scalar weights; a closed form in (K, d, R).
std::size_t parameter_count(const Architecture& arch);

/// Weights of one residual block: pre-normalized single/multi-head self
/// attention along time (per channel), then a pre-normalized feature mixer
/// (K x K channel mix followed by a d -> d -> d SiLU MLP, per timestep).
template <typename S>
struct ResidualBlockParams {
  Mat<S> attn_norm_gain, attn_norm_bias;  // 1 x d
  Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;  // d x d, 1 x d
  Mat<S> mix_norm_gain, mix_norm_bias;    // 1 x d
  Mat<S> channel_mix;                     // K x K
  Mat<S> w1, b1, w2, b2;                  // d x d, 1 x d
};

template <typename S>
struct DenoiserParams {
  Architecture arch;

  Mat<S> value_proj, cond_proj, input_bias;  // 1 x d each
  Mat<S> channel_embedding;                  // K x d
  Mat<S> step_w1, step_b1, step_w2, step_b2; // d x d, 1 x d
  std::vector<ResidualBlockParams<S>> blocks;
  Mat<S> out_norm_gain, out_norm_bias;  // 1 x d
  Mat<S> out_w;                         // d x 1
  Mat<S> out_b;                         // 1 x 1

  /// Zero tensors of the architecture's shapes.
  static DenoiserParams zeros(const Architecture& arch);

  /// (name, tensor) pairs in persistence order.
  std::vector<std::pair<std::string, Mat<S>*>> tensors();
  std::vector<std::pair<std::string, const Mat<S>*>> tensors() const;

  std::size_t size() const;

  template <typename T>
  DenoiserParams<T> cast() const {
    DenoiserParams<T> out = DenoiserParams<T>::zeros(arch);
    auto dst = out.tensors();
    auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<T>();
    return out;
  }
};

/// Seeded initialization: hidden weights ~ N(0, 1/fan_in), biases 0,
/// normalization gains 1, output projection exactly 0.
template <typename S>
DenoiserParams<S> init_params(const Architecture& arch, std::uint64_t seed);

/// Reusable activation storage for one forward/backward pass. Not shareable
/// between threads; parameters are.
template <typename S>
struct ForwardCache;

template <typename S>
class DenoiserWorkspace {
 public:
  DenoiserWorkspace();
  ~DenoiserWorkspace();
  DenoiserWorkspace(DenoiserWorkspace&&) noexcept;
  DenoiserWorkspace& operator=(DenoiserWorkspace&&) noexcept;

  ForwardCache<S>& cache() { return *cache_; }

 private:
  std::unique_ptr<ForwardCache<S>> cache_;
};

/// Noise estimate at the mask's target positions (channel-major order).
///
/// `window` is normalized. Lane 1 carries observed values off-target, `noisy`
/// values on-target, 0 where unobserved; lane 2 is 1 on observed context.
/// Throws ShapeMismatch, StepOutOfRange.
template <typename S>
std::vector<S> predict_noise(const DenoiserParams<S>& params, const TimeSeriesWindow& window, const Mask& mask,
                             std::span<const S> noisy, int step, DenoiserWorkspace<S>& workspace);

template <typename S>
std::vector<S> predict_noise(const DenoiserParams<S>& params, const TimeSeriesWindow& window, const Mask& mask,
                             std::span<const S> noisy, int step);

/// One supervised item: the target positions of `mask` were corrupted to
/// `noisy` with standard-normal `noise` at diffusion step `step`.
template <typename S>
struct TrainingExample {
  const TimeSeriesWindow* window = nullptr;
  const Mask* mask = nullptr;
  int step = 1;
  std::vector<S> noise;
  std::vector<S> noisy;
};

/// loss = mean over examples of ||noise - predicted||^2 / target_count.
/// Gradients are written (not accumulated) into `grads`, which is resized.
/// Throws EmptyInput, EmptyTarget.
template <typename S>
S loss_and_grad(const DenoiserParams<S>& params, std::span<const TrainingExample<S>> batch, DenoiserParams<S>& grads,
                DenoiserWorkspace<S>& workspace);

/// Same loss without the backward pass.
template <typename S>
S loss_only(const DenoiserParams<S>& params, std::span<const TrainingExample<S>> batch,
            DenoiserWorkspace<S>& workspace);

/// Adam moments and hyperparameters.
template <typename S>
struct OptimizerState {
  DenoiserParams<S> first_moment;
  DenoiserParams<S> second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename S>
OptimizerState<S> make_optimizer(const DenoiserParams<S>& params, double learning_rate = 1e-3);

/// Bias-corrected Adam update. Throws ShapeMismatch.
template <typename S>
void optimizer_step(DenoiserParams<S>& params, const DenoiserParams<S>& grads, OptimizerState<S>& state);

/// Persistence: `<stem>.json` manifest (architecture, tensor names, shapes,
/// dtype, byte offsets) next to `<stem>.bin`, little-endian float32 in
/// manifest order.
template <typename S>
void save_params(const DenoiserParams<S>& params, const std::filesystem::path& manifest);
template <typename S>
DenoiserParams<S> load_params(const std::filesystem::path& manifest);

template <typename S>
void save_optimizer(const OptimizerState<S>& state, const std::filesystem::path& manifest);
template <typename S>
OptimizerState<S> load_optimizer(const std::filesystem::path& manifest);

}  // namespace hydrocast

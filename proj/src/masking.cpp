#include "hydrocast/masking.hpp"

#include "hydrocast/error.hpp"

#include <numeric>
#include <string>
#include <utility>

namespace hydrocast {

std::vector<TargetPosition> Mask::positions() const {
  std::vector<TargetPosition> out;
  out.reserve(static_cast<std::size_t>(count()));
  for (int k = 0; k < target.rows(); ++k) {
    for (int l = 0; l < target.cols(); ++l) {
      if (target(k, l)) out.push_back({k, l});
    }
  }
  return out;
}

void MaskSpec::validate(int channels, int length) const {
  if (min_horizon < 1 || min_horizon > max_horizon || max_horizon > length) {
    throw Error(Errc::InvalidConfig, "mask horizons must satisfy 1 <= min <= max <= " + std::to_string(length));
  }
  const int cap = channel_cap(channels);
  if (cap < 1 || cap >= channels) {
    throw Error(Errc::InvalidConfig, "max_channels must lie in [1, " + std::to_string(channels - 1) + "]");
  }
}

Mask training_mask(const TimeSeriesWindow& window, const MaskSpec& spec, Rng& rng) {
  const int K = window.channel_count();
  const int L = window.length();
  spec.validate(K, L);
  const int rain = window.rain_channel();

  std::vector<int> eligible;
  for (int k = 0; k < K; ++k) {
    if (k != rain && window.observed.row(k).any()) eligible.push_back(k);
  }
  if (eligible.empty()) throw Error(Errc::NoEligibleChannel, "no observed non-rain channel to mask");

  const int picks = rng.uniform_int(1, std::min<int>(spec.channel_cap(K), static_cast<int>(eligible.size())));
  // partial Fisher-Yates: the first `picks` entries become a uniform subset
  for (int i = 0; i < picks; ++i) {
    const int j = rng.uniform_int(i, static_cast<int>(eligible.size()) - 1);
    std::swap(eligible[i], eligible[j]);
  }

  Mask mask(K, L);
  for (int i = 0; i < picks; ++i) {
    const int k = eligible[i];
    const int h = rng.uniform_int(spec.min_horizon, spec.max_horizon);
    for (int l = L - h; l < L; ++l) mask.target(k, l) = window.observed(k, l);
  }
  return mask;
}

Mask forecast_mask(const TimeSeriesWindow& window, const std::vector<int>& channels, int horizon) {
  const int K = window.channel_count();
  const int L = window.length();
  if (horizon < 0 || horizon > L) {
    throw Error(Errc::HorizonTooLarge, "horizon " + std::to_string(horizon) + " outside [0, " + std::to_string(L) + "]");
  }
  const int rain = window.rain_channel();
  Mask mask(K, L);
  for (const int k : channels) {
    if (k < 0 || k >= K) throw Error(Errc::ShapeMismatch, "channel index " + std::to_string(k) + " out of range");
    if (k == rain) throw Error(Errc::RainChannelTargeted, "the rain channel is context only");
    mask.target.row(k).tail(horizon).setConstant(true);
  }
  return mask;
}

nlohmann::json mask_to_json(const Mask& mask) {
  nlohmann::json runs = nlohmann::json::array();
  for (int k = 0; k < mask.target.rows(); ++k) {
    int l = 0;
    while (l < mask.target.cols()) {
      if (!mask.target(k, l)) {
        ++l;
        continue;
      }
      const int start = l;
      while (l < mask.target.cols() && mask.target(k, l)) ++l;
      runs.push_back({k, start, l});
    }
  }
  return runs;
}

}  // namespace hydrocast

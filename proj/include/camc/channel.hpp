// SPDX-License-Identifier: Apache-2.0
#pragma once

// Transmission channel between edge device and edge server: y_i = x_i + w_i
// with real i.i.d. Gaussian w whose variance is referenced to the mean square
// of the embedding being sent.

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace camc::channel {

using Rng = std::mt19937_64;

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

struct SemanticEmbedding {
  std::vector<float> values;
  std::string model_id;
  std::uint64_t frame_id = 0;
};

struct NoisyEmbedding {
  std::vector<float> values;
  double transmission_snr_db = kInfiniteSnr;
};

/// Noise variance mean(x^2) * 10^(-snr/10); zero at +inf SNR.
double noise_variance(std::span<const float> x, double snr_db);

/// Draws w for one embedding; all zeros at +inf SNR or for an all-zero x
/// (the latter logs a warning).
std::vector<float> draw_noise(std::span<const float> x, double snr_db, Rng& rng);

NoisyEmbedding transmit(const SemanticEmbedding& e, double snr_db, Rng& rng);

/// 10 log10(sum x^2 / sum (y - x)^2); +inf when y == x.
double calibrate_snr(std::span<const float> x, std::span<const float> y);

}  // namespace camc::channel

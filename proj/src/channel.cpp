// SPDX-License-Identifier: Apache-2.0
#include "camc/channel.hpp"

#include <cmath>
#include <stdexcept>

#include "camc/log.hpp"

namespace camc::channel {

namespace {
void check_snr(double snr_db) {
  if (std::isnan(snr_db) || snr_db == -kInfiniteSnr)
    throw std::invalid_argument("transmission SNR must be finite or +inf");
}
}  // namespace

double noise_variance(std::span<const float> x, double snr_db) {
  check_snr(snr_db);
  if (std::isinf(snr_db) || x.empty()) return 0.0;
  double p = 0.0;
  for (float v : x) p += static_cast<double>(v) * v;
  p /= static_cast<double>(x.size());
  return p * std::pow(10.0, -snr_db / 10.0);
}

std::vector<float> draw_noise(std::span<const float> x, double snr_db, Rng& rng) {
  const double var = noise_variance(x, snr_db);
  std::vector<float> w(x.size(), 0.0f);
  if (var == 0.0) {
    if (!std::isinf(snr_db)) log::warn("transmit: all-zero embedding, noise power is zero at finite SNR");
    return w;
  }
  std::normal_distribution<double> g(0.0, std::sqrt(var));
  for (auto& v : w) v = static_cast<float>(g(rng));
  return w;
}

NoisyEmbedding transmit(const SemanticEmbedding& e, double snr_db, Rng& rng) {
  if (e.values.empty()) throw std::invalid_argument("transmit: empty embedding");
  NoisyEmbedding y;
  y.transmission_snr_db = snr_db;
  y.values = e.values;
  if (std::isinf(snr_db)) {
    check_snr(snr_db);
    return y;
  }
  const auto w = draw_noise(e.values, snr_db, rng);
  for (std::size_t i = 0; i < w.size(); ++i) y.values[i] += w[i];
  return y;
}

double calibrate_snr(std::span<const float> x, std::span<const float> y) {
  if (x.size() != y.size()) throw std::invalid_argument("calibrate_snr: sample counts differ");
  double sig = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sig += static_cast<double>(x[i]) * x[i];
    const double d = static_cast<double>(y[i]) - x[i];
    noise += d * d;
  }
  if (noise == 0.0) return kInfiniteSnr;
  return 10.0 * std::log10(sig / noise);
}

}  // namespace camc::channel

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "camc/channel.hpp"
#include "camc/log.hpp"

using namespace camc;
using namespace camc::channel;

namespace {

std::vector<float> unit_power(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> x(n);
  double p = 0;
  for (auto& v : x) {
    v = g(rng);
    p += double(v) * v;
  }
  const auto scale = static_cast<float>(1.0 / std::sqrt(p / static_cast<double>(n)));
  for (auto& v : x) v *= scale;
  return x;
}

}  // namespace

TEST_SUITE("channel") {
  TEST_CASE("infinite SNR is the identity") {
    Rng rng(1);
    SemanticEmbedding e{unit_power(64, 1), "sscnet", 0};
    const auto y = transmit(e, kInfiniteSnr, rng);
    CHECK(y.values == e.values);
    CHECK(std::isinf(calibrate_snr(e.values, y.values)));
  }

  TEST_CASE("noise power at 0 dB") {
    Rng rng(2);
    const auto x = unit_power(64, 2);
    double ratio = 0;
    const int draws = 100000;
    double sum_w2 = 0;
    for (int i = 0; i < draws; ++i) {
      const auto w = draw_noise(x, 0.0, rng);
      for (float v : w) sum_w2 += double(v) * v;
    }
    ratio = 1.0 / (sum_w2 / (64.0 * draws));
    CHECK(ratio == doctest::Approx(1.0).epsilon(0.02));
    CHECK(noise_variance(x, 0.0) == doctest::Approx(1.0));
    CHECK(noise_variance(x, 10.0) == doctest::Approx(0.1));
  }

  TEST_CASE("all-zero embedding warns and returns zeros") {
    std::vector<std::string> seen;
    log::set_sink([&](log::Level, const std::string& m) { seen.push_back(m); });
    Rng rng(3);
    const std::vector<float> zero(16, 0.0f);
    const auto w = draw_noise(zero, 0.0, rng);
    log::reset_sink();
    for (float v : w) CHECK(v == 0.0f);
    CHECK(seen.size() == 1);
  }

  TEST_CASE("calibration closure") {
    Rng rng(4);
    const auto x = unit_power(1000000, 4);
    const auto y = transmit({x, "", 0}, 10.0, rng);
    CHECK(std::abs(calibrate_snr(x, y.values) - 10.0) < 0.1);

    // constructed unit noise on unit-power x
    const auto w = unit_power(1000000, 5);
    std::vector<float> sum(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) sum[i] = x[i] + w[i];
    CHECK(std::abs(calibrate_snr(x, sum)) < 0.1);
  }

  TEST_CASE("deterministic for a fixed seed") {
    const auto x = unit_power(32, 6);
    Rng a(9), b(9);
    CHECK(draw_noise(x, 3.0, a) == draw_noise(x, 3.0, b));
  }
}

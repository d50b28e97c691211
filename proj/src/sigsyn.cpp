// SPDX-License-Identifier: Apache-2.0
#include "camc/sigsyn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "camc/datasetio.hpp"

namespace camc::sigsyn {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

constexpr std::array<std::string_view, kNumClasses> kNames = {
    "8PSK", "AM-DSB", "AM-SSB", "BPSK", "CPFSK", "GFSK", "PAM4", "QAM16", "QAM64", "QPSK", "WBFM"};

// Message bandwidth of the analog classes, cycles/sample.
constexpr double kMessageCutoff = 0.05;
constexpr int kMessageTaps = 63;
constexpr int kHilbertTaps = 65;
// Peak-ish frequency deviation of WBFM per unit-RMS message, cycles/sample.
constexpr double kWbfmDeviation = 0.08;
constexpr double kFskModIndex = 0.5;

std::vector<double> convolve_same_tail(const std::vector<double>& x, const std::vector<double>& h) {
  // Full causal convolution truncated to x.size().
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    double acc = 0.0;
    const std::size_t kmax = std::min(h.size(), n + 1);
    for (std::size_t k = 0; k < kmax; ++k) acc += h[k] * x[n - k];
    y[n] = acc;
  }
  return y;
}

std::vector<double> hamming(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (n - 1));
  return w;
}

std::vector<double> lowpass_taps(double cutoff, int ntaps) {
  auto w = hamming(ntaps);
  std::vector<double> h(static_cast<std::size_t>(ntaps));
  const int mid = ntaps / 2;
  double sum = 0.0;
  for (int i = 0; i < ntaps; ++i) {
    const int m = i - mid;
    const double v = m == 0 ? 2.0 * cutoff : std::sin(2.0 * kPi * cutoff * m) / (kPi * m);
    h[i] = v * w[i];
    sum += h[i];
  }
  for (auto& v : h) v /= sum;
  return h;
}

std::vector<double> hilbert_taps(int ntaps) {
  auto w = hamming(ntaps);
  std::vector<double> h(static_cast<std::size_t>(ntaps), 0.0);
  const int mid = ntaps / 2;
  for (int i = 0; i < ntaps; ++i) {
    const int m = i - mid;
    if (m % 2 != 0) h[i] = 2.0 / (kPi * m) * w[i];
  }
  return h;
}

std::vector<double> gaussian_taps(double bt, int span_symbols, int sps) {
  const int n = span_symbols * sps + 1;
  std::vector<double> h(static_cast<std::size_t>(n));
  const double a = 2.0 * kPi * kPi * bt * bt / std::log(2.0);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i - n / 2) / sps;
    h[i] = std::exp(-a * t * t);
    sum += h[i];
  }
  for (auto& v : h) v /= sum;
  return h;
}

// Real lowpass Gaussian process with unit RMS over the returned window.
std::vector<double> message(std::size_t length, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  const auto h = lowpass_taps(kMessageCutoff, kMessageTaps);
  std::vector<double> w(length + h.size());
  for (auto& v : w) v = g(rng);
  auto y = convolve_same_tail(w, h);
  std::vector<double> m(y.begin() + static_cast<std::ptrdiff_t>(h.size()), y.end());
  double p = 0.0;
  for (double v : m) p += v * v;
  p = std::sqrt(p / static_cast<double>(m.size()));
  if (p > 0.0)
    for (auto& v : m) v /= p;
  return m;
}

std::vector<Sample> normalize_power(const std::vector<cd>& s) {
  double p = 0.0;
  for (const auto& v : s) p += std::norm(v);
  p /= static_cast<double>(s.size());
  const double k = p > 0.0 ? 1.0 / std::sqrt(p) : 1.0;
  std::vector<Sample> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = Sample(static_cast<float>(s[i].real() * k),
                                                             static_cast<float>(s[i].imag() * k));
  return out;
}

std::vector<Sample> linear_digital(ModulationClass c, std::size_t length, int sps, Rng& rng) {
  const auto taps = rrc_taps(kRrcRolloff, kRrcSpanSymbols, sps);
  const std::size_t nsym = length / static_cast<std::size_t>(sps) + kRrcSpanSymbols + 2;
  const auto sym = draw_symbols(c, nsym, rng);
  std::uniform_int_distribution<int> off(0, sps - 1);
  // Skip the filter transient, plus a random sub-symbol timing offset.
  const std::size_t start = static_cast<std::size_t>(kRrcSpanSymbols * sps + off(rng));
  std::vector<Sample> out(length);
  for (std::size_t n = 0; n < length; ++n) {
    const std::size_t idx = start + n;
    cd acc = 0.0;
    // y[idx] = sum_k sym[k] h[idx - k*sps]
    for (std::size_t j = idx % static_cast<std::size_t>(sps); j < taps.size() && j <= idx; j += sps) {
      const std::size_t k = (idx - j) / static_cast<std::size_t>(sps);
      if (k < sym.size()) acc += sym[k] * taps[j];
    }
    out[n] = Sample(static_cast<float>(acc.real()), static_cast<float>(acc.imag()));
  }
  return out;
}

std::vector<Sample> fsk(std::size_t length, int sps, bool gaussian, Rng& rng) {
  const std::size_t nsym = length / static_cast<std::size_t>(sps) + 8;
  std::bernoulli_distribution bit(0.5);
  std::vector<double> nrz(nsym * static_cast<std::size_t>(sps));
  for (std::size_t k = 0; k < nsym; ++k) {
    const double v = bit(rng) ? 1.0 : -1.0;
    for (int i = 0; i < sps; ++i) nrz[k * sps + i] = v;
  }
  std::vector<double> freq = nrz;
  std::size_t skip = static_cast<std::size_t>(sps);
  if (gaussian) {
    const auto g = gaussian_taps(kGfskBt, 4, sps);
    freq = convolve_same_tail(nrz, g);
    skip = g.size();
  }
  std::uniform_int_distribution<int> off(0, sps - 1);
  std::uniform_real_distribution<double> ph0(-kPi, kPi);
  skip += static_cast<std::size_t>(off(rng));
  double phase = ph0(rng);
  std::vector<Sample> out(length);
  for (std::size_t n = 0; n < length; ++n) {
    phase += kPi * kFskModIndex * freq[skip + n] / sps;
    out[n] = Sample(static_cast<float>(std::cos(phase)), static_cast<float>(std::sin(phase)));
  }
  return out;
}

}  // namespace

const std::array<std::string_view, kNumClasses>& class_names() { return kNames; }

std::string_view class_name(ModulationClass c) { return kNames.at(static_cast<std::size_t>(c)); }

ModulationClass class_from_id(int id) {
  if (id < 0 || id >= kNumClasses)
    throw std::invalid_argument("unknown modulation class id " + std::to_string(id));
  return static_cast<ModulationClass>(id);
}

std::optional<ModulationClass> class_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i)
    if (kNames[i] == name) return static_cast<ModulationClass>(i);
  return std::nullopt;
}

std::vector<ModulationClass> all_classes() {
  std::vector<ModulationClass> v;
  for (int i = 0; i < kNumClasses; ++i) v.push_back(static_cast<ModulationClass>(i));
  return v;
}

bool is_linear_digital(ModulationClass c) {
  switch (c) {
    case ModulationClass::PSK8:
    case ModulationClass::BPSK:
    case ModulationClass::QPSK:
    case ModulationClass::PAM4:
    case ModulationClass::QAM16:
    case ModulationClass::QAM64:
      return true;
    default:
      return false;
  }
}

void SensingChannelParams::validate() const {
  if (!(sample_interval_s > 0.0) || !std::isfinite(sample_interval_s))
    throw std::invalid_argument("sample_interval_s must be positive");
  if (std::isnan(snr_db) || snr_db == -kInfiniteSnr) throw std::invalid_argument("snr_db must be finite or +inf");
  if (!std::isfinite(freq_offset_hz) || !std::isfinite(phase_offset_cycles))
    throw std::invalid_argument("channel offsets must be finite");
}

std::vector<cd> constellation(ModulationClass c) {
  std::vector<cd> pts;
  auto psk = [&](int m, double rot) {
    for (int k = 0; k < m; ++k) pts.push_back(std::polar(1.0, 2.0 * kPi * k / m + rot));
  };
  auto qam = [&](int side) {
    for (int i = 0; i < side; ++i)
      for (int q = 0; q < side; ++q) pts.emplace_back(2 * i - side + 1, 2 * q - side + 1);
  };
  switch (c) {
    case ModulationClass::BPSK:
      psk(2, 0.0);
      break;
    case ModulationClass::QPSK:
      psk(4, kPi / 4);
      break;
    case ModulationClass::PSK8:
      psk(8, 0.0);
      break;
    case ModulationClass::PAM4:
      for (double a : {-3.0, -1.0, 1.0, 3.0}) pts.emplace_back(a, 0.0);
      break;
    case ModulationClass::QAM16:
      qam(4);
      break;
    case ModulationClass::QAM64:
      qam(8);
      break;
    default:
      throw std::invalid_argument("class " + std::string(class_name(c)) + " has no linear constellation");
  }
  double e = 0.0;
  for (const auto& p : pts) e += std::norm(p);
  e /= static_cast<double>(pts.size());
  for (auto& p : pts) p /= std::sqrt(e);
  return pts;
}

std::vector<cd> draw_symbols(ModulationClass c, std::size_t count, Rng& rng) {
  const auto pts = constellation(c);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  std::vector<cd> s(count);
  for (auto& v : s) v = pts[pick(rng)];
  return s;
}

std::vector<double> rrc_taps(double beta, int span_symbols, int sps) {
  if (sps < 1 || span_symbols < 1 || beta <= 0.0 || beta > 1.0)
    throw std::invalid_argument("invalid RRC parameters");
  const int n = span_symbols * sps + 1;
  std::vector<double> h(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i - n / 2) / sps;
    double v;
    if (std::abs(t) < 1e-12) {
      v = 1.0 - beta + 4.0 * beta / kPi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
      v = beta / std::sqrt(2.0) *
          ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta)) + (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta)));
    } else {
      v = (std::sin(kPi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(kPi * t * (1.0 + beta))) /
          (kPi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t)));
    }
    h[i] = v;
  }
  double e = 0.0;
  for (double v : h) e += v * v;
  const double k = std::sqrt(static_cast<double>(sps) / e);
  for (auto& v : h) v *= k;
  return h;
}

std::vector<Sample> synthesize_baseband(ModulationClass c, std::size_t length, int sps, Rng& rng) {
  if (length == 0) throw std::invalid_argument("frame length must be positive");
  if (sps < 1) throw std::invalid_argument("samples per symbol must be >= 1");
  if (static_cast<int>(c) < 0 || static_cast<int>(c) >= kNumClasses)
    throw std::invalid_argument("unknown modulation class id " + std::to_string(static_cast<int>(c)));

  if (is_linear_digital(c)) return linear_digital(c, length, sps, rng);

  switch (c) {
    case ModulationClass::CPFSK:
      return fsk(length, sps, false, rng);
    case ModulationClass::GFSK:
      return fsk(length, sps, true, rng);
    case ModulationClass::AM_DSB: {
      const auto m = message(length, rng);
      std::vector<cd> s(length);
      for (std::size_t i = 0; i < length; ++i) s[i] = m[i];
      return normalize_power(s);
    }
    case ModulationClass::AM_SSB: {
      const auto h = hilbert_taps(kHilbertTaps);
      const std::size_t delay = h.size() / 2;
      auto m = message(length + h.size(), rng);
      const auto q = convolve_same_tail(m, h);
      std::vector<cd> s(length);
      for (std::size_t i = 0; i < length; ++i) s[i] = cd(m[i + h.size() - delay], q[i + h.size()]);
      return normalize_power(s);
    }
    case ModulationClass::WBFM: {
      const auto m = message(length, rng);
      std::uniform_real_distribution<double> ph0(-kPi, kPi);
      double phase = ph0(rng);
      std::vector<Sample> out(length);
      for (std::size_t i = 0; i < length; ++i) {
        phase += 2.0 * kPi * kWbfmDeviation * m[i];
        out[i] = Sample(static_cast<float>(std::cos(phase)), static_cast<float>(std::sin(phase)));
      }
      return out;
    }
    default:
      break;
  }
  throw std::invalid_argument("unknown modulation class id " + std::to_string(static_cast<int>(c)));
}

ComplexFrame apply_sensing_channel(std::span<const Sample> s, const SensingChannelParams& p, Rng& rng) {
  if (s.empty()) throw std::invalid_argument("empty source signal");
  p.validate();

  cd gain = 1.0;
  if (p.gain_model == GainModel::RayleighBlock) {
    std::normal_distribution<double> g(0.0, std::sqrt(0.5));
    gain = cd(g(rng), g(rng));
  }

  std::vector<cd> hs(s.size());
  double power = 0.0;
  for (std::size_t l = 0; l < s.size(); ++l) {
    const double arg = -2.0 * kPi * (p.freq_offset_hz * static_cast<double>(l) * p.sample_interval_s +
                                     p.phase_offset_cycles);
    // Exact quarter-cycle rotations avoid cos/sin rounding for the identity cases.
    cd rot;
    if (p.freq_offset_hz == 0.0) {
      const double q = p.phase_offset_cycles * 4.0;
      if (q == std::floor(q)) {
        const int k = static_cast<int>(((static_cast<long long>(q) % 4) + 4) % 4);
        static constexpr std::array<cd, 4> quarter = {cd(1, 0), cd(0, -1), cd(-1, 0), cd(0, 1)};
        rot = quarter[k];
      } else {
        rot = std::polar(1.0, arg);
      }
    } else {
      rot = std::polar(1.0, arg);
    }
    hs[l] = gain * rot * cd(s[l].real(), s[l].imag());
    power += std::norm(hs[l]);
  }
  power /= static_cast<double>(s.size());

  ComplexFrame f;
  f.sensing_snr_db = p.snr_db;
  f.samples.resize(s.size());
  if (std::isinf(p.snr_db) || power == 0.0) {
    for (std::size_t l = 0; l < s.size(); ++l)
      f.samples[l] = Sample(static_cast<float>(hs[l].real()), static_cast<float>(hs[l].imag()));
    return f;
  }
  const double noise_var = power / std::pow(10.0, p.snr_db / 10.0);
  std::normal_distribution<double> g(0.0, std::sqrt(noise_var / 2.0));
  for (std::size_t l = 0; l < s.size(); ++l) {
    const cd x = hs[l] + cd(g(rng), g(rng));
    f.samples[l] = Sample(static_cast<float>(x.real()), static_cast<float>(x.imag()));
  }
  return f;
}

APFrame to_amplitude_phase(std::span<const Sample> x) {
  APFrame f;
  f.length = x.size();
  f.data.resize(2 * x.size());
  for (std::size_t l = 0; l < x.size(); ++l) {
    const double re = x[l].real(), im = x[l].imag();
    f.data[2 * l] = static_cast<float>(std::hypot(re, im));
    double a = std::atan2(im, re);
    if (a == -kPi) a = kPi;  // keep the half-open range (-pi, pi]
    f.data[2 * l + 1] = static_cast<float>(a);
  }
  return f;
}

void normalize_ap(APFrame& f) {
  if (f.length == 0) return;
  double p = 0.0;
  for (std::size_t l = 0; l < f.length; ++l) p += static_cast<double>(f.data[2 * l]) * f.data[2 * l];
  const double rms = std::sqrt(p / static_cast<double>(f.length));
  for (std::size_t l = 0; l < f.length; ++l) {
    if (rms > 0.0) f.data[2 * l] = static_cast<float>(f.data[2 * l] / rms);
    f.data[2 * l + 1] = static_cast<float>(f.data[2 * l + 1] / kPi);
  }
}

std::vector<int> DatasetConfig::default_snr_grid() {
  std::vector<int> g;
  for (int s = -20; s <= 18; s += 2) g.push_back(s);
  return g;
}

void DatasetConfig::validate() const {
  if (classes.empty()) throw std::invalid_argument("class list is empty");
  if (snr_grid_db.empty()) throw std::invalid_argument("SNR grid is empty");
  if (frames_per_class_per_snr == 0) throw std::invalid_argument("frames_per_class_per_snr must be positive");
  if (frame_length == 0) throw std::invalid_argument("frame length must be positive");
  if (sps < 1) throw std::invalid_argument("samples per symbol must be >= 1");
  for (int s : snr_grid_db)
    if (s < -32768 || s > 32767) throw std::invalid_argument("SNR out of int16 range");
  auto sorted = classes;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("duplicate class in class list");
  const double total = static_cast<double>(classes.size()) * snr_grid_db.size() * frames_per_class_per_snr;
  if (total > 4294967295.0) throw std::invalid_argument("frame count exceeds 32-bit range");
}

std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

ComplexFrame synthesize_frame(const DatasetConfig& cfg, std::size_t class_slot, std::size_t snr_slot,
                              std::size_t frame_index) {
  const std::uint64_t index =
      (class_slot * cfg.snr_grid_db.size() + snr_slot) * cfg.frames_per_class_per_snr + frame_index;
  const std::uint64_t seed = frame_seed(cfg.seed, index);
  Rng rng(seed);
  const auto s = synthesize_baseband(cfg.classes[class_slot], cfg.frame_length, cfg.sps, rng);
  SensingChannelParams p;
  p.snr_db = cfg.snr_grid_db[snr_slot];
  p.sample_interval_s = 1.0;
  p.gain_model = cfg.gain_model;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  p.phase_offset_cycles = cfg.random_phase ? u(rng) : 0.0;
  p.freq_offset_hz = cfg.max_freq_offset > 0.0 ? (2.0 * u(rng) - 1.0) * cfg.max_freq_offset : 0.0;
  auto f = apply_sensing_channel(s, p, rng);
  f.label = cfg.classes[class_slot];
  f.seed = seed;
  return f;
}

GenerateSummary generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& path) {
  cfg.validate();
  auto classes = cfg.classes;
  std::sort(classes.begin(), classes.end());
  DatasetConfig sorted = cfg;
  sorted.classes = classes;

  datasetio::DatasetHeader h;
  h.frame_count = static_cast<std::uint32_t>(classes.size() * cfg.snr_grid_db.size() * cfg.frames_per_class_per_snr);
  h.frame_length = static_cast<std::uint32_t>(cfg.frame_length);
  for (auto c : classes) h.class_names.emplace_back(class_name(c));
  h.flags = cfg.normalize_ap ? datasetio::kFlagNormalizedAp : 0;

  datasetio::DatasetWriter w(path, h);
  datasetio::FrameRecord rec;
  rec.iq.resize(2 * cfg.frame_length);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (std::size_t s = 0; s < cfg.snr_grid_db.size(); ++s) {
      for (std::size_t k = 0; k < cfg.frames_per_class_per_snr; ++k) {
        const auto f = synthesize_frame(sorted, c, s, k);
        rec.label_id = static_cast<std::uint16_t>(c);
        rec.sensing_snr_db = static_cast<std::int16_t>(cfg.snr_grid_db[s]);
        for (std::size_t l = 0; l < f.samples.size(); ++l) {
          rec.iq[2 * l] = f.samples[l].real();
          rec.iq[2 * l + 1] = f.samples[l].imag();
        }
        w.append(rec);
      }
    }
  }
  w.finish();
  return {path, h.frame_count};
}

}  // namespace camc::sigsyn

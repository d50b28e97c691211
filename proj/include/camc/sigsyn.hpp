// SPDX-License-Identifier: Apache-2.0
#pragma once

// Baseband waveform synthesis for the 11 modulation classes, the sensing
// channel x[l] = h[l] e^{-j2pi(nu l Ts + theta)} s[l] + z[l], and the
// amplitude/phase feature transform fed to the edge-device encoder.

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace camc::sigsyn {

using Sample = std::complex<float>;
using Rng = std::mt19937_64;

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

/// Class ids follow the alphabetical order of the names and are stable.
enum class ModulationClass : std::uint8_t {
  PSK8 = 0,
  AM_DSB,
  AM_SSB,
  BPSK,
  CPFSK,
  GFSK,
  PAM4,
  QAM16,
  QAM64,
  QPSK,
  WBFM,
};

inline constexpr int kNumClasses = 11;

const std::array<std::string_view, kNumClasses>& class_names();
std::string_view class_name(ModulationClass c);
/// Throws std::invalid_argument for ids outside [0, 11).
ModulationClass class_from_id(int id);
std::optional<ModulationClass> class_from_name(std::string_view name);
std::vector<ModulationClass> all_classes();

bool is_linear_digital(ModulationClass c);

enum class GainModel : std::uint8_t { Unit, RayleighBlock };

struct SensingChannelParams {
  double snr_db = kInfiniteSnr;     // +inf disables the noise term
  double freq_offset_hz = 0.0;      // nu
  double phase_offset_cycles = 0.0; // theta, in cycles
  double sample_interval_s = 1.0;   // Ts
  GainModel gain_model = GainModel::Unit;

  void validate() const;
};

struct ComplexFrame {
  std::vector<Sample> samples;
  ModulationClass label = ModulationClass::BPSK;
  double sensing_snr_db = kInfiniteSnr;
  std::uint64_t seed = 0;
};

/// L x 2 row-major: (amplitude, phase) per sample.
struct APFrame {
  std::size_t length = 0;
  std::vector<float> data;

  float amplitude(std::size_t l) const { return data[2 * l]; }
  float phase(std::size_t l) const { return data[2 * l + 1]; }
};

/// Unit-energy constellation for the linear digital classes.
std::vector<std::complex<double>> constellation(ModulationClass c);

/// Draws i.i.d. symbols from `constellation(c)`.
std::vector<std::complex<double>> draw_symbols(ModulationClass c, std::size_t count, Rng& rng);

/// Root-raised-cosine taps with sum of squares equal to `sps`.
std::vector<double> rrc_taps(double rolloff, int span_symbols, int sps);

inline constexpr double kRrcRolloff = 0.35;
inline constexpr int kRrcSpanSymbols = 8;
inline constexpr double kGfskBt = 0.35;

/// Unit-average-power baseband waveform of `length` samples.
std::vector<Sample> synthesize_baseband(ModulationClass c, std::size_t length, int sps, Rng& rng);

ComplexFrame apply_sensing_channel(std::span<const Sample> s, const SensingChannelParams& p, Rng& rng);

/// Magnitude and four-quadrant angle in (-pi, pi].
APFrame to_amplitude_phase(std::span<const Sample> x);
inline APFrame to_amplitude_phase(const ComplexFrame& x) { return to_amplitude_phase(x.samples); }

/// Amplitude column divided by its RMS, phase column divided by pi.
void normalize_ap(APFrame& f);

struct DatasetConfig {
  std::vector<ModulationClass> classes = all_classes();
  std::size_t frames_per_class_per_snr = 100;
  std::size_t frame_length = 512;
  int sps = 8;
  std::vector<int> snr_grid_db = default_snr_grid();
  std::uint64_t seed = 1;
  double max_freq_offset = 5e-4;  // cycles per sample, drawn uniformly in +-max
  bool random_phase = true;
  GainModel gain_model = GainModel::Unit;
  bool normalize_ap = true;  // recorded in the dataset flags

  static std::vector<int> default_snr_grid();
  void validate() const;
};

/// Deterministic sub-seed for frame `index` of a dataset seeded with `seed`.
std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t index);

/// Frames in write order: class-major, then SNR, then frame index.
ComplexFrame synthesize_frame(const DatasetConfig& cfg, std::size_t class_slot, std::size_t snr_slot,
                              std::size_t frame_index);

struct GenerateSummary {
  std::filesystem::path path;
  std::uint32_t frame_count = 0;
};

/// Writes a datasetio file with classes x SNR grid x frames_per_class_per_snr frames.
GenerateSummary generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& path);

}  // namespace camc::sigsyn

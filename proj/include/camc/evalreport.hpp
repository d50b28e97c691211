// SPDX-License-Identifier: Apache-2.0
#pragma once

// Accuracy tables, confusion matrices, SNR/compression sweeps and their CSV
// and SVG renderings.
//
// Accuracy CSV schema (one row per cell):
//   model,r,sensing_snr_db,transmission_snr_db,count,correct,accuracy
// An infinite transmission SNR is written as "inf".

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "camc/models.hpp"
#include "camc/train.hpp"

namespace camc::eval {

using models::Tensor;
using train::Features;

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Anything that maps test frames to class probabilities.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string id() const = 0;
  /// Compression rate reported alongside results (0 when not applicable).
  virtual double compression_rate() const = 0;
  /// Probabilities [idx.size(), M] for the listed frames.
  virtual Tensor predict(const Features& f, std::span<const std::size_t> idx, double transmission_snr_db,
                         nc::Rng& rng) = 0;
};

/// Encoder on the device, per-frame channel noise, classifier on the server.
class SplitClassifier final : public Classifier {
 public:
  SplitClassifier(models::Model& sscnet, models::Model& mcnet, std::string id = "c-amc");
  std::string id() const override { return id_; }
  double compression_rate() const override;
  Tensor predict(const Features& f, std::span<const std::size_t> idx, double transmission_snr_db,
                 nc::Rng& rng) override;

 private:
  models::Model& sscnet_;
  models::Model& mcnet_;
  std::string id_;
};

/// A single network on the A/P input; the transmission SNR does not apply.
class DirectClassifier final : public Classifier {
 public:
  explicit DirectClassifier(models::Model& model) : model_(model) {}
  std::string id() const override { return model_.id(); }
  double compression_rate() const override { return 0.0; }
  Tensor predict(const Features& f, std::span<const std::size_t> idx, double transmission_snr_db,
                 nc::Rng& rng) override;

 private:
  models::Model& model_;
};

struct AccuracyCell {
  std::string model;
  double r = 0.0;
  int sensing_snr_db = 0;
  double transmission_snr_db = 0.0;
  std::size_t count = 0;
  std::size_t correct = 0;

  double accuracy() const { return count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(count); }
};

struct AccuracyTable {
  std::vector<AccuracyCell> cells;

  const AccuracyCell* find(const std::string& model, double r, int sensing_snr_db, double transmission_snr_db) const;
  /// Unweighted mean over sensing-SNR bins >= min_sensing_db for one series.
  std::optional<double> mean_accuracy(const std::string& model, double r, double transmission_snr_db,
                                      int min_sensing_db) const;
  void append(const AccuracyTable& other);
};

struct ConfusionMatrix {
  std::string model;
  std::vector<std::string> class_names;
  std::vector<std::vector<std::size_t>> counts;  // [true][predicted]
  int sensing_snr_db = 0;
  double transmission_snr_db = 0.0;

  std::size_t total() const;
  std::size_t trace() const;
  double accuracy() const;
};

/// Seed of the channel noise for one (sensing, transmission) cell.
std::uint64_t cell_seed(std::uint64_t seed, int sensing_snr_db, double transmission_snr_db);

/// Per sensing-SNR accuracy over `test`; bins absent from the data are omitted.
AccuracyTable accuracy_vs_snr(Classifier& c, const Features& f, std::span<const std::size_t> test,
                              std::span<const int> sensing_snrs, double transmission_snr_db, std::uint64_t seed);

ConfusionMatrix confusion_matrix(Classifier& c, const Features& f, std::span<const std::size_t> test,
                                 const std::vector<std::string>& class_names, int sensing_snr_db,
                                 double transmission_snr_db, std::uint64_t seed);

AccuracyTable sweep_snr_grid(Classifier& c, const Features& f, std::span<const std::size_t> test,
                             std::span<const int> sensing_snrs, std::span<const double> transmission_snrs,
                             std::uint64_t seed);

/// N = 2L / r; throws std::invalid_argument unless N is a positive integer below 2L.
std::size_t embedding_for_rate(std::size_t frame_length, double r);

struct CompressionRun {
  double r = 0.0;
  std::size_t embedding = 0;
  train::TrainHistory history;
};

/// Trains one pipeline per compression rate with the same config and seeds,
/// then evaluates each over `sensing_snrs` at `transmission_snr_db`.
AccuracyTable sweep_compression(const datasetio::Dataset& ds, std::span<const double> rates,
                                const train::TrainConfig& cfg, std::span<const int> sensing_snrs,
                                double transmission_snr_db, std::uint64_t eval_seed,
                                std::vector<CompressionRun>* runs = nullptr);

// ---- emission ---------------------------------------------------------------

std::string accuracy_csv(const AccuracyTable& t);
std::string confusion_csv(const ConfusionMatrix& m);

/// Accuracy against sensing SNR, one polyline per (model, r, transmission SNR) series.
std::string accuracy_svg(const AccuracyTable& t, const std::string& title);
/// Sensing x transmission grid for one series, colour scale fixed to [0, 1].
std::string grid_svg(const AccuracyTable& t, const std::string& title);
/// Row-normalised confusion heatmap, colour scale fixed to [0, 1].
std::string confusion_svg(const ConfusionMatrix& m, const std::string& title);

struct Report {
  struct Named {
    std::string name;
    AccuracyTable table;
  };
  std::vector<Named> curves;  // written as <name>.csv and <name>.svg line plots
  std::vector<Named> grids;   // written as <name>.csv and <name>.svg heatmaps
  std::vector<ConfusionMatrix> matrices;  // confusion_<model>_<snr>dB.{csv,svg}
};

/// Writes every table and matrix under `dir` (created if needed). Returns the paths written.
std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& dir);

std::string format_snr(double snr_db);

}  // namespace camc::eval

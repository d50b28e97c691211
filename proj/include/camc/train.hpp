// SPDX-License-Identifier: Apache-2.0
#pragma once

// Joint end-to-end training of the encoder and classifier through the noisy
// transmission channel, plus single-network training for the
// direct-classification baselines.

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "camc/datasetio.hpp"
#include "camc/models.hpp"

namespace camc::train {

using models::Model;
using models::Tensor;

/// Per-example transmission SNR during training and validation.
struct SnrSchedule {
  enum class Kind { Noiseless, Fixed, Uniform };
  Kind kind = Kind::Uniform;
  double fixed_db = 0.0;
  double lo_db = -10.0;
  double hi_db = 18.0;

  static SnrSchedule noiseless() { return {Kind::Noiseless, 0.0, 0.0, 0.0}; }
  static SnrSchedule fixed(double db) { return {Kind::Fixed, db, 0.0, 0.0}; }
  static SnrSchedule uniform(double lo, double hi) { return {Kind::Uniform, 0.0, lo, hi}; }

  double draw(nc::Rng& rng) const;
  std::string describe() const;
  void validate() const;
};

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch_size = 200;
  std::size_t patience = 30;
  std::size_t max_epochs = 150;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  SnrSchedule schedule;
  std::uint64_t seed = 1;
  bool reinit = true;   // re-initialise weights from `seed` before training
  bool frozen = false;  // evaluate only: no weight or batch-norm statistic updates

  void validate() const;
};

class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Stratified per (label, sensing SNR) cell; deterministic from config.seed.
Split split_dataset(const datasetio::Dataset& ds, const TrainConfig& cfg);

/// Amplitude/phase features of every frame, normalised when the dataset says so.
struct Features {
  Tensor ap;  // [frames, L, 2]
  std::vector<int> labels;
  std::vector<int> snr_db;
  std::size_t frame_length = 0;
  std::size_t classes = 0;

  std::size_t count() const { return labels.size(); }
};

Features extract_features(const datasetio::Dataset& ds);
Tensor gather(const Features& f, std::span<const std::size_t> idx);

/// Adds channel noise to each embedding row at an SNR drawn per row.
void add_channel_noise(Tensor& z, const SnrSchedule& sched, nc::Rng& rng);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

enum class StopReason { Patience, MaxEpochs };
std::string to_string(StopReason r);

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  StopReason reason = StopReason::MaxEpochs;
};

/// Non-finite training loss. The message carries the epoch history so far.
class TrainDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  TrainHistory history;
  Split split;
};

/// One joint forward/backward pass: A/P -> encoder -> noise (constant in the
/// backward pass) -> classifier -> cross-entropy. Gradients accumulate into
/// the trainable parameters of both models. Returns the batch loss.
double joint_backward(Model& sscnet, Model& mcnet, const Tensor& ap_batch, std::span<const int> labels,
                      const SnrSchedule& sched, nc::Rng& rng, models::Mode mode = models::Mode::Train);

/// Trains encoder and classifier jointly; restores the best-validation weights.
TrainResult train(Model& sscnet, Model& mcnet, const datasetio::Dataset& ds, const TrainConfig& cfg);

/// Trains a single network end to end on A/P input with no channel.
TrainResult train_direct(Model& model, const datasetio::Dataset& ds, const TrainConfig& cfg);

struct EvalLoss {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Infer-mode loss/accuracy of the joint pipeline on the given frames. The
/// channel noise is drawn from an rng seeded with `noise_seed`.
EvalLoss evaluate_joint(Model& sscnet, Model& mcnet, const Features& f, std::span<const std::size_t> idx,
                        const SnrSchedule& sched, std::uint64_t noise_seed);
EvalLoss evaluate_direct(Model& model, const Features& f, std::span<const std::size_t> idx);

/// epoch,train_loss,val_loss,val_acc
std::string history_csv(const TrainHistory& h);

/// Seed for the validation channel noise of a run.
std::uint64_t validation_noise_seed(std::uint64_t seed);

}  // namespace camc::train

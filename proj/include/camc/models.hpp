// SPDX-License-Identifier: Apache-2.0
#pragma once

// Network graphs for the edge-device encoder (SSCNet), the edge-server
// classifier (MCNet) and the two direct-classification baselines, together
// with parameter/FLOP accounting and the end-to-end split pipeline.
//
// Accounting conventions:
//   * parameters: element counts of every tensor; batch-norm running mean and
//     variance count as non-trainable parameters;
//   * FLOPs: 2 per multiply-accumulate of conv/dense/recurrent/attention
//     products; same-padded conv counts L output positions; activations,
//     batch-norm, pooling, softmax and bias adds are not counted.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "camc/numcore.hpp"
#include "camc/sigsyn.hpp"

namespace camc::models {

using Tensor = nc::Tensor<float>;
using Var = nc::Var<float>;
using Tape = nc::Tape<float>;
using Param = nc::Param<float>;
using nc::Shape;

enum class Mode { Train, Infer };

struct ForwardContext {
  Mode mode = Mode::Infer;
  nc::Rng* rng = nullptr;  // required for dropout in train mode
  bool train() const { return mode == Mode::Train; }
};

/// Shapes below are per example; the batch axis is implicit.
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Var forward(Tape& tape, const Var& x, ForwardContext& ctx) = 0;
  virtual std::uint64_t flops(const Shape& /*in*/) const { return 0; }
  virtual std::vector<Param*> params() { return {}; }
  virtual void init(nc::Rng& /*rng*/) {}
  virtual std::unique_ptr<Layer> clone() const = 0;

 private:
  std::string name_;
};

struct LayerSummary {
  std::string name;
  std::string kind;
  Shape output_shape;
  std::size_t params = 0;
  std::size_t non_trainable = 0;
  std::uint64_t flops = 0;
};

class Model {
 public:
  Model(std::string id, Shape input_shape);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const std::string& id() const { return id_; }
  const Shape& input_shape() const { return input_shape_; }
  Shape output_shape() const;

  /// Appends a layer; throws if its input shape does not chain.
  void add(std::unique_ptr<Layer> layer);
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  /// x is [B, input_shape...]. With `logits`, a trailing softmax layer is skipped.
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx, bool logits = false);
  /// Per-layer output shapes for a batch of inputs (infer mode, no tape kept).
  std::vector<Shape> trace_shapes(const Tensor& x);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::vector<Param*> trainable_params();

  std::size_t count_params(bool include_non_trainable) const;
  std::uint64_t count_flops() const;
  std::vector<LayerSummary> summary() const;

  /// Glorot-uniform kernels, U(+-1/sqrt(H)) recurrent matrices, forget-gate bias 1.
  void init(std::uint64_t seed);

 private:
  std::string id_;
  Shape input_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Shape> shapes_;  // output shape of each layer
};

/// r = 2L / N
inline double compression_rate(std::size_t frame_length, std::size_t embedding) {
  return 2.0 * static_cast<double>(frame_length) / static_cast<double>(embedding);
}

inline constexpr double kDropoutRate = 0.5;
inline constexpr std::size_t kDefaultClasses = 11;

/// (L, 2) -> (N): conv(64x8, relu) - dropout - conv(32x8, relu) - column sum
/// - BN - dense(N, selu) - BN.
Model build_sscnet(std::size_t frame_length, std::size_t embedding);

/// (N) -> (M): BiLSTM(64+64, sequence) - dropout - BiLSTM(64+64, final)
/// - reshape(1x128) - 8-head attention (d_k = d_v = 128) - dense(256, selu)
/// - BN - dropout - dense(M) - softmax.
Model build_mcnet(std::size_t embedding, std::size_t classes = kDefaultClasses);

/// SSCNet trunk through the pooled BN vector, then dense(M) - softmax.
Model build_sscnet_dc(std::size_t frame_length, std::size_t classes = kDefaultClasses);

/// LSTM(40, sequence) - LSTM(40, final) - dense(M) - softmax on (L, 2).
Model build_lstmnet_dc(std::size_t frame_length, std::size_t classes = kDefaultClasses);

std::size_t count_params(const Model& m, bool include_non_trainable);
std::uint64_t count_flops(const Model& m);

/// Table-style per-layer summary.
std::string summary_text(const Model& m);
std::string summary_csv(const Model& m);

/// Amplitude/phase features of a frame, optionally normalized.
Tensor ap_features(const sigsyn::ComplexFrame& x, bool normalize);

/// Encoder stage: AP batch [B, L, 2] -> embeddings [B, N] (infer mode).
Tensor encode(Model& sscnet, const Tensor& ap_batch);
/// Classifier stage: embeddings [B, N] -> probabilities [B, M] (infer mode).
Tensor classify(Model& mcnet, const Tensor& embeddings);

/// c = h(f(P(x)) + w). At +inf SNR w = 0.
std::vector<float> forward_pipeline(const sigsyn::ComplexFrame& x, Model& sscnet, Model& mcnet,
                                    double transmission_snr_db, nc::Rng& rng, bool normalize_ap = true);

std::size_t argmax(std::span<const float> v);

}  // namespace camc::models

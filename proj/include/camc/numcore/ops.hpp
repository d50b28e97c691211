// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differentiable layer primitives. All ops are instantiated for float
// (training/inference) and double (gradient checks).

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "camc/numcore/tape.hpp"

namespace camc::nc {

using Rng = std::mt19937_64;

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

enum class Activation { None, Relu, Selu, Softmax };

/// x[..., K] * w[K, N] -> [..., N]
template <typename T>
Var<T> matmul(Tape<T>& tape, const Var<T>& x, const Var<T>& w);

/// Adds b[N] along the last axis.
template <typename T>
Var<T> add_bias(Tape<T>& tape, const Var<T>& x, const Var<T>& b);

/// xW + b
template <typename T>
Var<T> dense(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> selu(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> tanh(Tape<T>& tape, const Var<T>& x);
/// Row-wise over the last axis.
template <typename T>
Var<T> softmax(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> activation(Tape<T>& tape, Activation kind, const Var<T>& x);

/// Same-padded 1-D cross-correlation: x[B, L, Cin], w[K, Cin, Cout], b[Cout]
/// -> [B, L, Cout]. Padding puts floor((K-1)/2) zeros before the signal.
template <typename T>
Var<T> conv1d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b);

struct BatchNormOptions {
  bool train = false;
  double momentum = 0.99;  // running = momentum * running + (1 - momentum) * batch
  double eps = 1e-3;
};

/// Per-feature normalization of x[rows, F]. In train mode the running
/// statistics are updated in place.
template <typename T>
Var<T> batchnorm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 Tensor<T>& running_mean, Tensor<T>& running_var, const BatchNormOptions& opt);

/// Inverted dropout; identity outside training.
template <typename T>
Var<T> dropout(Tape<T>& tape, const Var<T>& x, double rate, bool train, Rng& rng);

/// x[B, L, C] -> [B, C], summing over L.
template <typename T>
Var<T> column_sum(Tape<T>& tape, const Var<T>& x);

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& x, Shape shape);

/// Concatenates along the last axis; leading dims must agree.
template <typename T>
Var<T> concat_last(Tape<T>& tape, const std::vector<Var<T>>& xs);

/// x[i] with the leading axis removed.
template <typename T>
Var<T> select_first(Tape<T>& tape, const Var<T>& x, std::size_t i);

/// x + c where c is treated as a constant (no gradient flows into c).
template <typename T>
Var<T> add_constant(Tape<T>& tape, const Var<T>& x, const Tensor<T>& c);

/// sum(x * w) for a constant weight tensor of x's shape.
template <typename T>
Var<T> weighted_sum(Tape<T>& tape, const Var<T>& x, const Tensor<T>& w);

/// Mean negative log-likelihood of labels under probability rows; the log
/// argument is clamped at 1e-12.
template <typename T>
Var<T> cross_entropy(Tape<T>& tape, const Var<T>& probs, std::span<const int> labels);

/// cross_entropy(softmax(logits)) with the fused gradient (p - onehot) / B.
template <typename T>
Var<T> softmax_cross_entropy(Tape<T>& tape, const Var<T>& logits, std::span<const int> labels);

}  // namespace camc::nc

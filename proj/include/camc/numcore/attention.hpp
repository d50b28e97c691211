// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "camc/numcore/tape.hpp"

namespace camc::nc {

/// softmax(Q K^T / sqrt(d_k)) V per batch item.
/// Q[B, Sq, dk], K[B, Sk, dk], V[B, Sk, dv] -> [B, Sq, dv]. Rank-2 operands
/// are treated as a single batch item.
template <typename T>
Var<T> scaled_dot_attention(Tape<T>& tape, const Var<T>& q, const Var<T>& k, const Var<T>& v);

/// Per-head projections stacked on the leading axis.
template <typename T>
struct AttentionWeights {
  Var<T> wq;  // [h, d_model, d_k]
  Var<T> wk;  // [h, d_model, d_k]
  Var<T> wv;  // [h, d_model, d_v]
  Var<T> wo;  // [h * d_v, d_model]

  std::size_t heads() const { return wq.shape().at(0); }
};

/// Self-attention over x[B, S, d_model]:
///   head_i = Attention(x Wq_i, x Wk_i, x Wv_i); out = concat(head_1..h) Wo.
template <typename T>
Var<T> multi_head_attention(Tape<T>& tape, const Var<T>& x, const AttentionWeights<T>& w);

}  // namespace camc::nc

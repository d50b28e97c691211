// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>

#include "camc/numcore/tape.hpp"

namespace camc::nc {

/// Gate blocks are laid out [input | forget | candidate | output] along the
/// 4H axis: w[D, 4H], u[H, 4H], b[4H].
template <typename T>
struct LstmWeights {
  Var<T> w;
  Var<T> u;
  Var<T> b;
};

/// One cell update: (x_t[B, D], h[B, H], c[B, H]) -> (h_t, c_t).
template <typename T>
std::pair<Var<T>, Var<T>> lstm_step(Tape<T>& tape, const Var<T>& x, const Var<T>& h_prev, const Var<T>& c_prev,
                                    const LstmWeights<T>& wts);

enum class LstmReturn { Sequence, Final };

/// Runs a zero-initialised LSTM over x[B, T, D]. With `reverse` the steps go
/// from T-1 down to 0; sequence outputs stay aligned to input time. `Final`
/// returns the state after the last processed step, shape [B, H].
template <typename T>
Var<T> lstm(Tape<T>& tape, const Var<T>& x, const LstmWeights<T>& wts, bool reverse, LstmReturn ret);

/// Forward and backward LSTMs concatenated per step ([B, T, 2H]), or the
/// forward state at T concatenated with the backward state at 1 ([B, 2H]).
template <typename T>
Var<T> bilstm(Tape<T>& tape, const Var<T>& x, const LstmWeights<T>& fwd, const LstmWeights<T>& bwd, LstmReturn ret);

}  // namespace camc::nc

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference gradient checks in double precision, shared by the
// unit tests and the acceptance runner.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "camc/numcore.hpp"

namespace camc::testing {

using TensorD = nc::Tensor<double>;
using VarD = nc::Var<double>;
using TapeD = nc::Tape<double>;
using OpFn = std::function<VarD(TapeD&, const std::vector<VarD>&)>;

inline constexpr double kFdStep = 1e-4;
inline constexpr double kFdTolerance = 1e-4;

inline TensorD random_tensor(nc::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  TensorD t(std::move(shape));
  for (auto& v : t.span()) v = u(rng);
  return t;
}

/// Values with |v| in [0.05, 1] and random sign, so no element sits near a ReLU kink.
inline TensorD away_from_zero(nc::Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  TensorD t(std::move(shape));
  for (auto& v : t.span()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
};

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) per
/// input, maximised over inputs. The scalar loss is sum(op(inputs) * w) for a
/// fixed random w.
inline GradCheck check_gradients(const std::vector<TensorD>& inputs, const OpFn& op, std::mt19937_64& rng,
                                 double step = kFdStep) {
  TensorD weights;
  auto loss_of = [&](const std::vector<TensorD>& xs, bool grad, std::vector<TensorD>* grads) {
    TapeD tape(grad);
    std::vector<VarD> vars;
    for (const auto& x : xs) vars.push_back(grad ? tape.input(x) : tape.constant(x));
    VarD out = op(tape, vars);
    if (weights.empty()) weights = random_tensor(out.shape(), rng);
    VarD loss = nc::weighted_sum(tape, out, weights);
    const double value = loss.value()[0];
    if (grad) {
      tape.backward(loss);
      for (auto& v : vars) grads->push_back(v.grad().empty() ? TensorD(v.shape()) : v.grad());
    }
    return value;
  };

  std::vector<TensorD> analytic;
  loss_of(inputs, true, &analytic);

  GradCheck result;
  std::vector<TensorD> xs = inputs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < xs[i].size(); ++j) {
      const double orig = xs[i][j];
      xs[i][j] = orig + step;
      const double up = loss_of(xs, false, nullptr);
      xs[i][j] = orig - step;
      const double down = loss_of(xs, false, nullptr);
      xs[i][j] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i][j];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    const double scale = std::max(std::sqrt(a2), std::sqrt(n2));
    const double rel = scale == 0.0 ? 0.0 : std::sqrt(diff2) / scale;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_input = i;
    }
  }
  return result;
}

struct OpCase {
  std::string name;
  /// Draws the inputs for one seed and returns the op under test.
  std::function<std::pair<std::vector<TensorD>, OpFn>(std::mt19937_64&)> make;
};

inline nc::LstmWeights<double> lstm_weights(const std::vector<VarD>& v, std::size_t at) {
  return {v[at], v[at + 1], v[at + 2]};
}

/// One case per differentiable layer op used by the networks.
inline std::vector<OpCase> layer_op_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"dense", [](std::mt19937_64& rng) {
                     return std::pair{std::vector<TensorD>{random_tensor({3, 5}, rng), random_tensor({5, 4}, rng),
                                                           random_tensor({4}, rng)},
                                      OpFn([](TapeD& t, const std::vector<VarD>& v) {
                                        return nc::dense(t, v[0], v[1], v[2]);
                                      })};
                   }});
  cases.push_back({"conv1d", [](std::mt19937_64& rng) {
                     return std::pair{std::vector<TensorD>{random_tensor({2, 9, 3}, rng), random_tensor({4, 3, 5}, rng),
                                                           random_tensor({5}, rng)},
                                      OpFn([](TapeD& t, const std::vector<VarD>& v) {
                                        return nc::conv1d(t, v[0], v[1], v[2]);
                                      })};
                   }});
  cases.push_back({"batchnorm", [](std::mt19937_64& rng) {
                     return std::pair{std::vector<TensorD>{random_tensor({6, 4}, rng, -2.0, 2.0),
                                                           random_tensor({4}, rng, 0.5, 1.5), random_tensor({4}, rng)},
                                      OpFn([](TapeD& t, const std::vector<VarD>& v) {
                                        TensorD mean({4}), var({4}, 1.0);
                                        nc::BatchNormOptions opt;
                                        opt.train = true;
                                        return nc::batchnorm(t, v[0], v[1], v[2], mean, var, opt);
                                      })};
                   }});
  cases.push_back({"batchnorm_infer", [](std::mt19937_64& rng) {
                     TensorD mean = random_tensor({4}, rng), var = random_tensor({4}, rng, 0.5, 2.0);
                     return std::pair{std::vector<TensorD>{random_tensor({5, 4}, rng), random_tensor({4}, rng, 0.5, 1.5),
                                                           random_tensor({4}, rng)},
                                      OpFn([mean, var](TapeD& t, const std::vector<VarD>& v) mutable {
                                        return nc::batchnorm(t, v[0], v[1], v[2], mean, var, {});
                                      })};
                   }});
  cases.push_back({"lstm_step", [](std::mt19937_64& rng) {
                     const std::size_t d = 3, h = 4;
                     return std::pair{std::vector<TensorD>{random_tensor({2, d}, rng), random_tensor({2, h}, rng),
                                                           random_tensor({2, h}, rng), random_tensor({d, 4 * h}, rng),
                                                           random_tensor({h, 4 * h}, rng), random_tensor({4 * h}, rng)},
                                      OpFn([](TapeD& t, const std::vector<VarD>& v) {
                                        auto [hn, cn] = nc::lstm_step(t, v[0], v[1], v[2], lstm_weights(v, 3));
                                        return nc::concat_last(t, std::vector<VarD>{hn, cn});
                                      })};
                   }});
  for (auto ret : {nc::LstmReturn::Sequence, nc::LstmReturn::Final}) {
    cases.push_back({ret == nc::LstmReturn::Sequence ? "bilstm_sequence" : "bilstm_final",
                     [ret](std::mt19937_64& rng) {
                       const std::size_t d = 2, h = 3;
                       std::vector<TensorD> in{random_tensor({2, 4, d}, rng)};
                       for (int dir = 0; dir < 2; ++dir) {
                         in.push_back(random_tensor({d, 4 * h}, rng));
                         in.push_back(random_tensor({h, 4 * h}, rng));
                         in.push_back(random_tensor({4 * h}, rng));
                       }
                       return std::pair{in, OpFn([ret](TapeD& t, const std::vector<VarD>& v) {
                                          return nc::bilstm(t, v[0], lstm_weights(v, 1), lstm_weights(v, 4), ret);
                                        })};
                     }});
  }
  cases.push_back({"scaled_dot_attention", [](std::mt19937_64& rng) {
                     return std::pair{std::vector<TensorD>{random_tensor({2, 3, 4}, rng), random_tensor({2, 5, 4}, rng),
                                                           random_tensor({2, 5, 3}, rng)},
                                      OpFn([](TapeD& t, const std::vector<VarD>& v) {
                                        return nc::scaled_dot_attention(t, v[0], v[1], v[2]);
                                      })};
                   }});
  cases.push_back({"multi_head_attention", [](std::mt19937_64& rng) {
                     const std::size_t h = 2, dm = 4, dk = 3, dv = 3;
                     return std::pair{
                         std::vector<TensorD>{random_tensor({2, 3, dm}, rng), random_tensor({h, dm, dk}, rng),
                                              random_tensor({h, dm, dk}, rng), random_tensor({h, dm, dv}, rng),
                                              random_tensor({h * dv, dm}, rng)},
                         OpFn([](TapeD& t, const std::vector<VarD>& v) {
                           return nc::multi_head_attention(t, v[0], nc::AttentionWeights<double>{v[1], v[2], v[3], v[4]});
                         })};
                   }});
  cases.push_back({"relu", [](std::mt19937_64& rng) {
                     return std::pair{std::vector<TensorD>{away_from_zero({4, 5}, rng)},
                                      OpFn([](TapeD& t, const std::vector<VarD>& v) { return nc::relu(t, v[0]); })};
                   }});
  cases.push_back({"selu", [](std::mt19937_64& rng) {
                     return std::pair{std::vector<TensorD>{away_from_zero({4, 5}, rng)},
                                      OpFn([](TapeD& t, const std::vector<VarD>& v) { return nc::selu(t, v[0]); })};
                   }});
  cases.push_back({"softmax", [](std::mt19937_64& rng) {
                     return std::pair{std::vector<TensorD>{random_tensor({3, 6}, rng, -2.0, 2.0)},
                                      OpFn([](TapeD& t, const std::vector<VarD>& v) { return nc::softmax(t, v[0]); })};
                   }});
  cases.push_back({"softmax_cross_entropy", [](std::mt19937_64& rng) {
                     std::uniform_int_distribution<int> label(0, 5);
                     std::vector<int> labels{label(rng), label(rng), label(rng), label(rng)};
                     return std::pair{std::vector<TensorD>{random_tensor({4, 6}, rng, -2.0, 2.0)},
                                      OpFn([labels](TapeD& t, const std::vector<VarD>& v) {
                                        return nc::softmax_cross_entropy(t, v[0], labels);
                                      })};
                   }});
  return cases;
}

}  // namespace camc::testing

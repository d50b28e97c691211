// SPDX-License-Identifier: Apache-2.0
#include "camc/numcore/ops.hpp"

#include <algorithm>
#include <cmath>

#include "eigen_util.hpp"

namespace camc::nc {

using detail::as_mat;
using detail::leading;
using detail::CMapM;
using detail::MapM;
using detail::CStridedMap;
using detail::RowMat;

template <typename T>
Var<T> matmul(Tape<T>& tape, const Var<T>& x, const Var<T>& w) {
  if (w.value().rank() != 2 || x.value().rank() < 1 || x.shape().back() != w.shape()[0])
    throw_shape("matmul", x.shape(), w.shape());
  const std::size_t rows = leading(x.shape()), k = w.shape()[0], n = w.shape()[1];
  Shape os = x.shape();
  os.back() = n;
  Tensor<T> y(os);
  as_mat(y, rows, n).noalias() = as_mat(x.value(), rows, k) * as_mat(w.value(), k, n);
  auto out = tape.make(std::move(y), tape.needs(x, w));
  if (out.requires_grad()) {
    tape.record([x, w, out, rows, k, n]() mutable {
      if (out.grad().empty()) return;
      auto dy = as_mat(std::as_const(out.grad()), rows, n);
      if (x.requires_grad())
        as_mat(x.node()->ensure_grad(), rows, k).noalias() += dy * as_mat(w.value(), k, n).transpose();
      if (w.requires_grad())
        as_mat(w.node()->ensure_grad(), k, n).noalias() += as_mat(x.value(), rows, k).transpose() * dy;
    });
  }
  return out;
}

template <typename T>
Var<T> add_bias(Tape<T>& tape, const Var<T>& x, const Var<T>& b) {
  if (b.value().rank() != 1 || x.value().rank() < 1 || x.shape().back() != b.shape()[0])
    throw_shape("add_bias", x.shape(), b.shape());
  const std::size_t rows = leading(x.shape()), n = b.shape()[0];
  Tensor<T> y = x.value();
  as_mat(y, rows, n).rowwise() += as_mat(b.value(), 1, n).row(0);
  auto out = tape.make(std::move(y), tape.needs(x, b));
  if (out.requires_grad()) {
    tape.record([x, b, out, rows, n]() mutable {
      if (out.grad().empty()) return;
      auto dy = as_mat(std::as_const(out.grad()), rows, n);
      if (x.requires_grad()) as_mat(x.node()->ensure_grad(), rows, n) += dy;
      if (b.requires_grad()) as_mat(b.node()->ensure_grad(), 1, n) += dy.colwise().sum();
    });
  }
  return out;
}

template <typename T>
Var<T> dense(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return add_bias(tape, matmul(tape, x, w), b);
}

namespace {

// Elementwise op with derivative expressed through input x and output y.
template <typename T, typename F, typename D>
Var<T> elementwise(Tape<T>& tape, const Var<T>& x, F f, D dfdx) {
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  auto out = tape.make(std::move(y), tape.needs(x));
  if (out.requires_grad()) {
    tape.record([x, out, dfdx]() mutable {
      if (out.grad().empty()) return;
      auto& dx = x.node()->ensure_grad();
      const auto& dy = out.grad();
      const auto& xv = x.value();
      const auto& yv = out.value();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * dfdx(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  return elementwise(
      tape, x, [](T v) { return !(v <= T(0)) ? v : T(0); },  // NaN passes through
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> selu(Tape<T>& tape, const Var<T>& x) {
  const T lambda = static_cast<T>(kSeluLambda), alpha = static_cast<T>(kSeluAlpha);
  return elementwise(
      tape, x, [=](T v) { return v > T(0) ? lambda * v : lambda * alpha * std::expm1(v); },
      [=](T v, T y) { return v > T(0) ? lambda : y + lambda * alpha; });
}

template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x) {
  return elementwise(
      tape, x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(Tape<T>& tape, const Var<T>& x) {
  return elementwise(
      tape, x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> softmax(Tape<T>& tape, const Var<T>& x) {
  if (x.value().rank() < 1) throw ShapeError("softmax: scalar input");
  const std::size_t rows = leading(x.shape()), n = x.shape().back();
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * n;
    T* o = y.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) s += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= s;
  }
  auto out = tape.make(std::move(y), tape.needs(x));
  if (out.requires_grad()) {
    tape.record([x, out, rows, n]() mutable {
      if (out.grad().empty()) return;
      auto& dx = x.node()->ensure_grad();
      const auto& dy = out.grad();
      const auto& yv = out.value();
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[r * n + j] * yv[r * n + j];
        for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += yv[r * n + j] * (dy[r * n + j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Var<T> activation(Tape<T>& tape, Activation kind, const Var<T>& x) {
  switch (kind) {
    case Activation::Relu:
      return relu(tape, x);
    case Activation::Selu:
      return selu(tape, x);
    case Activation::Softmax:
      return softmax(tape, x);
    case Activation::None:
      break;
  }
  return x;
}

template <typename T>
Var<T> conv1d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 3 || ws[1] != xs[2]) throw_shape("conv1d", xs, ws);
  if (b.value().rank() != 1 || b.shape()[0] != ws[2]) throw_shape("conv1d bias", ws, b.shape());
  const std::size_t batch = xs[0], len = xs[1], cin = xs[2], k = ws[0], cout = ws[2];
  if (k > len) throw ShapeError("conv1d: kernel length " + std::to_string(k) + " exceeds input length " +
                                std::to_string(len));
  const std::size_t pad = (k - 1) / 2;
  const std::size_t plen = len + k - 1;  // padded length per batch item
  const std::size_t rows = batch * plen - (k - 1);

  // Batch items are laid end to end with their zero padding. The receptive
  // field of padded row r is then the contiguous run xp[r .. r + k), so the
  // im2col matrix is an overlapping view with row stride cin. Output row
  // b * plen + l is y[b, l]; the k - 1 rows straddling two items are
  // discarded.
  auto xp = std::make_shared<Tensor<T>>(Shape{batch * plen, cin});
  const auto& xv = x.value();
  for (std::size_t bi = 0; bi < batch; ++bi)
    std::copy_n(xv.data() + bi * len * cin, len * cin, xp->data() + (bi * plen + pad) * cin);

  const auto windows = [xp, rows, k, cin] {
    return CStridedMap<T>(xp->data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k * cin),
                          Eigen::OuterStride<>(static_cast<Eigen::Index>(cin)));
  };
  RowMat<T> full(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cout));
  full.noalias() = windows() * as_mat(w.value(), k * cin, cout);
  full.rowwise() += as_mat(b.value(), 1, cout).row(0);

  Tensor<T> y(Shape{batch, len, cout});
  for (std::size_t bi = 0; bi < batch; ++bi)
    std::copy_n(full.data() + bi * plen * cout, len * cout, y.data() + bi * len * cout);

  auto out = tape.make(std::move(y), tape.needs(x, w, b));
  if (out.requires_grad()) {
    tape.record([x, w, b, out, xp, windows, batch, len, cin, k, cout, pad, plen, rows]() mutable {
      if (out.grad().empty()) return;
      const auto& dy = out.grad();
      const auto er = static_cast<Eigen::Index>(rows);
      const auto ec = static_cast<Eigen::Index>(cin);
      const auto eo = static_cast<Eigen::Index>(cout);
      RowMat<T> dfull = RowMat<T>::Zero(er, eo);
      for (std::size_t bi = 0; bi < batch; ++bi)
        std::copy_n(dy.data() + bi * len * cout, len * cout, dfull.data() + bi * plen * cout);
      if (b.requires_grad()) as_mat(b.node()->ensure_grad(), 1, cout) += dfull.colwise().sum();
      if (w.requires_grad()) as_mat(w.node()->ensure_grad(), k * cin, cout).noalias() += windows().transpose() * dfull;
      if (x.requires_grad()) {
        RowMat<T> dxp = RowMat<T>::Zero(static_cast<Eigen::Index>(batch * plen), ec);
        const auto& wv = w.value();
        for (std::size_t j = 0; j < k; ++j)
          dxp.middleRows(static_cast<Eigen::Index>(j), er).noalias() +=
              dfull * CMapM<T>(wv.data() + j * cin * cout, ec, eo).transpose();
        auto& dx = x.node()->ensure_grad();
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const T* src = dxp.data() + (bi * plen + pad) * cin;
          T* dst = dx.data() + bi * len * cin;
          for (std::size_t i = 0; i < len * cin; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> batchnorm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 Tensor<T>& running_mean, Tensor<T>& running_var, const BatchNormOptions& opt) {
  const auto& xs = x.shape();
  if (xs.size() != 2 || gamma.shape() != Shape{xs[1]} || beta.shape() != Shape{xs[1]} ||
      running_mean.shape() != Shape{xs[1]} || running_var.shape() != Shape{xs[1]})
    throw_shape("batchnorm", xs, gamma.shape());
  const std::size_t rows = xs[0], f = xs[1];
  if (opt.train && rows == 0) throw std::invalid_argument("batchnorm: empty batch in train mode");

  std::vector<T> mean(f), invstd(f);
  if (opt.train) {
    for (std::size_t j = 0; j < f; ++j) {
      double m = 0.0;
      for (std::size_t r = 0; r < rows; ++r) m += x.value()[r * f + j];
      m /= static_cast<double>(rows);
      double v = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        const double d = x.value()[r * f + j] - m;
        v += d * d;
      }
      v /= static_cast<double>(rows);
      mean[j] = static_cast<T>(m);
      invstd[j] = static_cast<T>(1.0 / std::sqrt(v + opt.eps));
      running_mean[j] = static_cast<T>(opt.momentum * running_mean[j] + (1.0 - opt.momentum) * m);
      running_var[j] = static_cast<T>(opt.momentum * running_var[j] + (1.0 - opt.momentum) * v);
    }
  } else {
    for (std::size_t j = 0; j < f; ++j) {
      mean[j] = running_mean[j];
      invstd[j] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[j]) + opt.eps));
    }
  }

  auto xhat = std::make_shared<Tensor<T>>(xs);
  Tensor<T> y(xs);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      const T h = (x.value()[r * f + j] - mean[j]) * invstd[j];
      (*xhat)[r * f + j] = h;
      y[r * f + j] = gamma.value()[j] * h + beta.value()[j];
    }

  auto out = tape.make(std::move(y), tape.needs(x, gamma, beta));
  if (out.requires_grad()) {
    const bool train = opt.train;
    tape.record([x, gamma, beta, out, xhat, invstd = std::move(invstd), rows, f, train]() mutable {
      if (out.grad().empty()) return;
      const auto& dy = out.grad();
      std::vector<T> sum_dy(f, T(0)), sum_dy_xhat(f, T(0));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < f; ++j) {
          sum_dy[j] += dy[r * f + j];
          sum_dy_xhat[j] += dy[r * f + j] * (*xhat)[r * f + j];
        }
      if (gamma.requires_grad()) {
        auto& dg = gamma.node()->ensure_grad();
        for (std::size_t j = 0; j < f; ++j) dg[j] += sum_dy_xhat[j];
      }
      if (beta.requires_grad()) {
        auto& db = beta.node()->ensure_grad();
        for (std::size_t j = 0; j < f; ++j) db[j] += sum_dy[j];
      }
      if (x.requires_grad()) {
        auto& dx = x.node()->ensure_grad();
        const T n = static_cast<T>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < f; ++j) {
            const T g = gamma.value()[j];
            if (train) {
              dx[r * f + j] += g * invstd[j] / n *
                               (n * dy[r * f + j] - sum_dy[j] - (*xhat)[r * f + j] * sum_dy_xhat[j]);
            } else {
              dx[r * f + j] += g * invstd[j] * dy[r * f + j];
            }
          }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> dropout(Tape<T>& tape, const Var<T>& x, double rate, bool train, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (!train || rate == 0.0) return x;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<Tensor<T>>(x.shape());
  // The mask stream is a splitmix64 sequence keyed by one draw of rng; each
  // 64-bit output supplies two 32-bit uniforms.
  const auto cut = static_cast<std::uint64_t>(std::ldexp(rate, 32));
  const std::size_t n = mask->size();
  std::uint64_t state = rng();
  T* m = mask->data();
  const T keep[2] = {T(0), scale};
  auto next = [&state] {
    std::uint64_t r = (state += 0x9e3779b97f4a7c15ull);
    r = (r ^ (r >> 30)) * 0xbf58476d1ce4e5b9ull;
    r = (r ^ (r >> 27)) * 0x94d049bb133111ebull;
    return r ^ (r >> 31);
  };
  for (std::size_t i = 0; i + 1 < n; i += 2) {
    const std::uint64_t r = next();
    m[i] = keep[(r & 0xffffffffu) >= cut];
    m[i + 1] = keep[(r >> 32) >= cut];
  }
  if (n % 2 == 1) m[n - 1] = keep[(next() & 0xffffffffu) >= cut];
  Tensor<T> y(x.shape());
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < n; ++i) y[i] = xv[i] * m[i];
  auto out = tape.make(std::move(y), tape.needs(x));
  if (out.requires_grad()) {
    tape.record([x, out, mask]() mutable {
      if (out.grad().empty()) return;
      auto& dx = x.node()->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += out.grad()[i] * (*mask)[i];
    });
  }
  return out;
}

template <typename T>
Var<T> column_sum(Tape<T>& tape, const Var<T>& x) {
  const auto& xs = x.shape();
  if (xs.size() != 3) throw ShapeError("column_sum: expected rank-3 input, got " + shape_str(xs));
  const std::size_t batch = xs[0], len = xs[1], c = xs[2];
  Tensor<T> y(Shape{batch, c});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t j = 0; j < c; ++j) y[b * c + j] += x.value()[(b * len + l) * c + j];
  auto out = tape.make(std::move(y), tape.needs(x));
  if (out.requires_grad()) {
    tape.record([x, out, batch, len, c]() mutable {
      if (out.grad().empty()) return;
      auto& dx = x.node()->ensure_grad();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t l = 0; l < len; ++l)
          for (std::size_t j = 0; j < c; ++j) dx[(b * len + l) * c + j] += out.grad()[b * c + j];
    });
  }
  return out;
}

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& x, Shape shape) {
  auto out = tape.make(x.value().reshaped(std::move(shape)), tape.needs(x));
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      if (out.grad().empty()) return;
      auto& dx = x.node()->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += out.grad()[i];
    });
  }
  return out;
}

template <typename T>
Var<T> concat_last(Tape<T>& tape, const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_last: no inputs");
  const Shape& s0 = xs[0].shape();
  const std::size_t rows = leading(s0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool needs = false;
  for (const auto& v : xs) {
    const Shape& s = v.shape();
    if (s.size() != s0.size() || !std::equal(s.begin(), s.end() - 1, s0.begin())) throw_shape("concat_last", s0, s);
    widths.push_back(s.back());
    total += s.back();
    needs = needs || v.requires_grad();
  }
  Shape os = s0;
  os.back() = total;
  Tensor<T> y(os);
  std::size_t off = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(xs[i].value().data() + r * widths[i], widths[i], y.data() + r * total + off);
    off += widths[i];
  }
  auto out = tape.make(std::move(y), tape.grad_enabled() && needs);
  if (out.requires_grad()) {
    tape.record([xs, out, widths, rows, total]() mutable {
      if (out.grad().empty()) return;
      std::size_t off = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].requires_grad()) {
          auto& dx = xs[i].node()->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < widths[i]; ++j) dx[r * widths[i] + j] += out.grad()[r * total + off + j];
        }
        off += widths[i];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> select_first(Tape<T>& tape, const Var<T>& x, std::size_t i) {
  const Shape& s = x.shape();
  if (s.empty() || i >= s[0]) throw ShapeError("select_first: index " + std::to_string(i) + " out of range for " +
                                               shape_str(s));
  Shape os(s.begin() + 1, s.end());
  const std::size_t n = numel(os);
  std::vector<T> d(x.value().data() + i * n, x.value().data() + (i + 1) * n);
  auto out = tape.make(Tensor<T>(os, std::move(d)), tape.needs(x));
  if (out.requires_grad()) {
    tape.record([x, out, i, n]() mutable {
      if (out.grad().empty()) return;
      auto& dx = x.node()->ensure_grad();
      for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += out.grad()[j];
    });
  }
  return out;
}

template <typename T>
Var<T> add_constant(Tape<T>& tape, const Var<T>& x, const Tensor<T>& c) {
  if (c.shape() != x.shape()) throw_shape("add_constant", x.shape(), c.shape());
  Tensor<T> y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += c[i];
  auto out = tape.make(std::move(y), tape.needs(x));
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      if (out.grad().empty()) return;
      auto& dx = x.node()->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += out.grad()[i];
    });
  }
  return out;
}

template <typename T>
Var<T> weighted_sum(Tape<T>& tape, const Var<T>& x, const Tensor<T>& w) {
  if (w.shape() != x.shape()) throw_shape("weighted_sum", x.shape(), w.shape());
  T s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
  auto out = tape.make(Tensor<T>(Shape{1}, std::vector<T>{s}), tape.needs(x));
  if (out.requires_grad()) {
    tape.record([x, out, w]() mutable {
      if (out.grad().empty()) return;
      auto& dx = x.node()->ensure_grad();
      const T g = out.grad()[0];
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * w[i];
    });
  }
  return out;
}

namespace {

template <typename T>
void check_labels(const Shape& s, std::span<const int> labels, const char* op) {
  if (s.size() != 2) throw ShapeError(std::string(op) + ": expected [batch, classes], got " + shape_str(s));
  if (labels.size() != s[0])
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(s[0]));
  if (s[0] == 0) throw std::invalid_argument(std::string(op) + ": empty batch");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= s[1])
      throw std::invalid_argument(std::string(op) + ": label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(s[1]) + ")");
}

}  // namespace

template <typename T>
Var<T> cross_entropy(Tape<T>& tape, const Var<T>& probs, std::span<const int> labels) {
  check_labels<T>(probs.shape(), labels, "cross_entropy");
  const std::size_t batch = probs.shape()[0], m = probs.shape()[1];
  constexpr double kClamp = 1e-12;
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double rs = 0.0;
    for (std::size_t j = 0; j < m; ++j) rs += probs.value()[b * m + j];
    if (std::abs(rs - 1.0) > 1e-5)
      throw std::invalid_argument("cross_entropy: probability row " + std::to_string(b) + " sums to " +
                                  std::to_string(rs));
    loss -= std::log(std::max<double>(probs.value()[b * m + labels[b]], kClamp));
  }
  loss /= static_cast<double>(batch);
  auto out = tape.make(Tensor<T>(Shape{1}, std::vector<T>{static_cast<T>(loss)}), tape.needs(probs));
  if (out.requires_grad()) {
    std::vector<int> lab(labels.begin(), labels.end());
    tape.record([probs, out, lab, batch, m]() mutable {
      if (out.grad().empty()) return;
      auto& dp = probs.node()->ensure_grad();
      const T g = out.grad()[0] / static_cast<T>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        const T p = probs.value()[b * m + lab[b]];
        if (p > T(kClamp)) dp[b * m + lab[b]] -= g / p;
      }
    });
  }
  return out;
}

template <typename T>
Var<T> softmax_cross_entropy(Tape<T>& tape, const Var<T>& logits, std::span<const int> labels) {
  check_labels<T>(logits.shape(), labels, "softmax_cross_entropy");
  const std::size_t batch = logits.shape()[0], m = logits.shape()[1];
  auto probs = std::make_shared<Tensor<T>>(logits.shape());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* in = logits.value().data() + b * m;
    T* p = probs->data() + b * m;
    const T mx = *std::max_element(in, in + m);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(static_cast<double>(in[j] - mx));
    const double lse = std::log(s) + mx;
    for (std::size_t j = 0; j < m; ++j) p[j] = static_cast<T>(std::exp(in[j] - lse));
    loss += lse - in[labels[b]];
  }
  loss /= static_cast<double>(batch);
  auto out = tape.make(Tensor<T>(Shape{1}, std::vector<T>{static_cast<T>(loss)}), tape.needs(logits));
  if (out.requires_grad()) {
    std::vector<int> lab(labels.begin(), labels.end());
    tape.record([logits, out, probs, lab, batch, m]() mutable {
      if (out.grad().empty()) return;
      auto& dz = logits.node()->ensure_grad();
      const T g = out.grad()[0] / static_cast<T>(batch);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < m; ++j)
          dz[b * m + j] += g * ((*probs)[b * m + j] - (static_cast<int>(j) == lab[b] ? T(1) : T(0)));
    });
  }
  return out;
}

#define CAMC_INSTANTIATE(T)                                                                                   \
  template Var<T> matmul(Tape<T>&, const Var<T>&, const Var<T>&);                                             \
  template Var<T> add_bias(Tape<T>&, const Var<T>&, const Var<T>&);                                           \
  template Var<T> dense(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&);                               \
  template Var<T> relu(Tape<T>&, const Var<T>&);                                                              \
  template Var<T> selu(Tape<T>&, const Var<T>&);                                                              \
  template Var<T> sigmoid(Tape<T>&, const Var<T>&);                                                           \
  template Var<T> tanh(Tape<T>&, const Var<T>&);                                                              \
  template Var<T> softmax(Tape<T>&, const Var<T>&);                                                           \
  template Var<T> activation(Tape<T>&, Activation, const Var<T>&);                                            \
  template Var<T> conv1d(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&);                              \
  template Var<T> batchnorm(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&,    \
                            const BatchNormOptions&);                                                         \
  template Var<T> dropout(Tape<T>&, const Var<T>&, double, bool, Rng&);                                       \
  template Var<T> column_sum(Tape<T>&, const Var<T>&);                                                        \
  template Var<T> reshape(Tape<T>&, const Var<T>&, Shape);                                                    \
  template Var<T> concat_last(Tape<T>&, const std::vector<Var<T>>&);                                          \
  template Var<T> select_first(Tape<T>&, const Var<T>&, std::size_t);                                         \
  template Var<T> add_constant(Tape<T>&, const Var<T>&, const Tensor<T>&);                                    \
  template Var<T> weighted_sum(Tape<T>&, const Var<T>&, const Tensor<T>&);                                    \
  template Var<T> cross_entropy(Tape<T>&, const Var<T>&, std::span<const int>);                               \
  template Var<T> softmax_cross_entropy(Tape<T>&, const Var<T>&, std::span<const int>);

CAMC_INSTANTIATE(float)
CAMC_INSTANTIATE(double)

}  // namespace camc::nc

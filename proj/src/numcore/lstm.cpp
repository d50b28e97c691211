// SPDX-License-Identifier: Apache-2.0
#include "camc/numcore/lstm.hpp"

#include <cmath>
#include <memory>

#include "camc/numcore/ops.hpp"
#include "eigen_util.hpp"

namespace camc::nc {

using detail::as_mat;
using detail::CStridedMap;
using detail::RowMat;
using detail::StridedMap;

namespace {

template <typename T>
std::size_t check_weights(const LstmWeights<T>& wts, std::size_t in_dim, const char* op) {
  const auto& us = wts.u.shape();
  if (us.size() != 2 || us[1] != 4 * us[0]) throw ShapeError(std::string(op) + ": recurrent weights must be [H, 4H], got " +
                                                             shape_str(us));
  const std::size_t h = us[0];
  if (wts.w.shape() != Shape{in_dim, 4 * h}) throw_shape(std::string(op) + " input weights", wts.w.shape(),
                                                         Shape{in_dim, 4 * h});
  if (wts.b.shape() != Shape{4 * h}) throw_shape(std::string(op) + " bias", wts.b.shape(), Shape{4 * h});
  return h;
}

// In place: z[B, 4H] pre-activations -> gate activations.
template <typename T>
void activate_gates(RowMat<T>& z, std::size_t h) {
  const auto hh = static_cast<Eigen::Index>(h);
  z.leftCols(2 * hh) = z.leftCols(2 * hh).array().logistic().matrix();
  z.middleCols(2 * hh, hh) = z.middleCols(2 * hh, hh).array().tanh().matrix();
  z.rightCols(hh) = z.rightCols(hh).array().logistic().matrix();
}

// c = f * c_prev + i * g;  h = o * tanh(c)
template <typename T>
void cell_update(const RowMat<T>& z, const RowMat<T>& c_prev, RowMat<T>& c, RowMat<T>& tanh_c, RowMat<T>& hv) {
  const auto hh = c_prev.cols();
  c = (z.middleCols(hh, hh).array() * c_prev.array() + z.leftCols(hh).array() * z.middleCols(2 * hh, hh).array())
          .matrix();
  tanh_c = c.array().tanh().matrix();
  hv = (z.rightCols(hh).array() * tanh_c.array()).matrix();
}

// Given gate activations and dh/dc at a step, returns dz and the dc carried to the previous step.
template <typename T>
void gate_backward(const RowMat<T>& gates, const RowMat<T>& c_prev, const RowMat<T>& tanh_c, const RowMat<T>& dh,
                   const RowMat<T>& dc_in, std::size_t h, RowMat<T>& dz, RowMat<T>& dc_prev) {
  const auto hh = static_cast<Eigen::Index>(h);
  const auto i = gates.leftCols(hh).array();
  const auto f = gates.middleCols(hh, hh).array();
  const auto g = gates.middleCols(2 * hh, hh).array();
  const auto o = gates.rightCols(hh).array();
  const auto tc = tanh_c.array();
  const auto one = T(1);
  dz.resize(gates.rows(), 4 * hh);
  const auto dc = (dc_in.array() + dh.array() * o * (one - tc * tc)).eval();
  dz.leftCols(hh) = (dc * g * i * (one - i)).matrix();
  dz.middleCols(hh, hh) = (dc * c_prev.array() * f * (one - f)).matrix();
  dz.middleCols(2 * hh, hh) = (dc * i * (one - g * g)).matrix();
  dz.rightCols(hh) = (dh.array() * tc * o * (one - o)).matrix();
  dc_prev = (dc * f).matrix();
}

}  // namespace

template <typename T>
std::pair<Var<T>, Var<T>> lstm_step(Tape<T>& tape, const Var<T>& x, const Var<T>& h_prev, const Var<T>& c_prev,
                                    const LstmWeights<T>& wts) {
  if (x.value().rank() != 2) throw ShapeError("lstm_step: x must be [B, D], got " + shape_str(x.shape()));
  const std::size_t batch = x.shape()[0], din = x.shape()[1];
  const std::size_t h = check_weights(wts, din, "lstm_step");
  if (h_prev.shape() != Shape{batch, h}) throw_shape("lstm_step h", h_prev.shape(), Shape{batch, h});
  if (c_prev.shape() != Shape{batch, h}) throw_shape("lstm_step c", c_prev.shape(), Shape{batch, h});
  const auto b = static_cast<Eigen::Index>(batch);
  const auto hh = static_cast<Eigen::Index>(h);

  auto gates = std::make_shared<RowMat<T>>(b, 4 * hh);
  gates->noalias() = as_mat(x.value(), batch, din) * as_mat(wts.w.value(), din, 4 * h);
  gates->noalias() += as_mat(h_prev.value(), batch, h) * as_mat(wts.u.value(), h, 4 * h);
  gates->rowwise() += as_mat(wts.b.value(), 1, 4 * h).row(0);
  activate_gates(*gates, h);

  Tensor<T> c(Shape{batch, h}), hv(Shape{batch, h});
  auto tanh_c = std::make_shared<RowMat<T>>(b, hh);
  {
    RowMat<T> cm, hm;
    cell_update<T>(*gates, as_mat(c_prev.value(), batch, h), cm, *tanh_c, hm);
    as_mat(c, batch, h) = cm;
    as_mat(hv, batch, h) = hm;
  }

  const bool needs = tape.needs(x, h_prev, c_prev, wts.w, wts.u, wts.b);
  auto h_out = tape.make(std::move(hv), needs);
  auto c_out = tape.make(std::move(c), needs);
  if (needs) {
    tape.record([=]() mutable {
      if (h_out.grad().empty() && c_out.grad().empty()) return;
      RowMat<T> dh = RowMat<T>::Zero(b, hh), dc = RowMat<T>::Zero(b, hh);
      if (!h_out.grad().empty()) dh = as_mat(std::as_const(h_out.grad()), batch, h);
      if (!c_out.grad().empty()) dc = as_mat(std::as_const(c_out.grad()), batch, h);
      RowMat<T> cp = as_mat(c_prev.value(), batch, h);
      RowMat<T> dz, dc_prev;
      gate_backward(*gates, cp, *tanh_c, dh, dc, h, dz, dc_prev);
      if (x.requires_grad())
        as_mat(x.node()->ensure_grad(), batch, din).noalias() += dz * as_mat(wts.w.value(), din, 4 * h).transpose();
      if (h_prev.requires_grad())
        as_mat(h_prev.node()->ensure_grad(), batch, h).noalias() += dz * as_mat(wts.u.value(), h, 4 * h).transpose();
      if (c_prev.requires_grad()) as_mat(c_prev.node()->ensure_grad(), batch, h) += dc_prev;
      if (wts.w.requires_grad())
        as_mat(wts.w.node()->ensure_grad(), din, 4 * h).noalias() += as_mat(x.value(), batch, din).transpose() * dz;
      if (wts.u.requires_grad())
        as_mat(wts.u.node()->ensure_grad(), h, 4 * h).noalias() +=
            as_mat(h_prev.value(), batch, h).transpose() * dz;
      if (wts.b.requires_grad()) as_mat(wts.b.node()->ensure_grad(), 1, 4 * h) += dz.colwise().sum();
    });
  }
  return {h_out, c_out};
}

template <typename T>
Var<T> lstm(Tape<T>& tape, const Var<T>& x, const LstmWeights<T>& wts, bool reverse, LstmReturn ret) {
  if (x.value().rank() != 3) throw ShapeError("lstm: x must be [B, T, D], got " + shape_str(x.shape()));
  const std::size_t batch = x.shape()[0], steps = x.shape()[1], din = x.shape()[2];
  if (steps == 0) throw ShapeError("lstm: empty sequence");
  const std::size_t h = check_weights(wts, din, "lstm");
  const std::size_t g4 = 4 * h;
  const auto b = static_cast<Eigen::Index>(batch);
  const auto hh = static_cast<Eigen::Index>(h);
  const auto row_stride = static_cast<Eigen::Index>(steps * g4);

  // Input projections for every (b, t) in one product.
  auto xw = std::make_shared<Tensor<T>>(Shape{batch * steps, g4});
  as_mat(*xw, batch * steps, g4).noalias() = as_mat(x.value(), batch * steps, din) * as_mat(wts.w.value(), din, g4);

  struct Cache {
    std::vector<RowMat<T>> gates, c, tanh_c, h;  // c/h hold steps+1 states, index 0 = zero init
  };
  auto cache = std::make_shared<Cache>();
  cache->c.push_back(RowMat<T>::Zero(b, hh));
  cache->h.push_back(RowMat<T>::Zero(b, hh));
  const Eigen::Matrix<T, 1, Eigen::Dynamic> bias = as_mat(wts.b.value(), 1, g4).row(0);
  const auto u = as_mat(wts.u.value(), h, g4);

  const Shape out_shape = ret == LstmReturn::Sequence ? Shape{batch, steps, h} : Shape{batch, h};
  Tensor<T> y(out_shape);
  for (std::size_t p = 0; p < steps; ++p) {
    const std::size_t t = reverse ? steps - 1 - p : p;
    RowMat<T> z = CStridedMap<T>(xw->data() + t * g4, b, static_cast<Eigen::Index>(g4),
                                 Eigen::OuterStride<>(row_stride));
    z.noalias() += cache->h[p] * u;
    z.rowwise() += bias;
    activate_gates(z, h);
    RowMat<T> c, tc, hv;
    cell_update(z, cache->c[p], c, tc, hv);
    if (ret == LstmReturn::Sequence) {
      StridedMap<T>(y.data() + t * h, b, hh, Eigen::OuterStride<>(static_cast<Eigen::Index>(steps * h))) = hv;
    } else if (p + 1 == steps) {
      as_mat(y, batch, h) = hv;
    }
    cache->gates.push_back(std::move(z));
    cache->c.push_back(std::move(c));
    cache->tanh_c.push_back(std::move(tc));
    cache->h.push_back(std::move(hv));
  }

  auto out = tape.make(std::move(y), tape.needs(x, wts.w, wts.u, wts.b));
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      if (out.grad().empty()) return;
      const auto& dy = out.grad();
      Tensor<T> dzs(Shape{batch * steps, g4});
      RowMat<T> dh_next = RowMat<T>::Zero(b, hh), dc_next = RowMat<T>::Zero(b, hh);
      RowMat<T> du = RowMat<T>::Zero(hh, static_cast<Eigen::Index>(g4));
      RowMat<T> dz, dc_prev;
      for (std::size_t p = steps; p-- > 0;) {
        const std::size_t t = reverse ? steps - 1 - p : p;
        RowMat<T> dh = dh_next;
        if (ret == LstmReturn::Sequence) {
          dh += CStridedMap<T>(dy.data() + t * h, b, hh, Eigen::OuterStride<>(static_cast<Eigen::Index>(steps * h)));
        } else if (p + 1 == steps) {
          dh += as_mat(dy, batch, h);
        }
        gate_backward(cache->gates[p], cache->c[p], cache->tanh_c[p], dh, dc_next, h, dz, dc_prev);
        StridedMap<T>(dzs.data() + t * g4, b, static_cast<Eigen::Index>(g4), Eigen::OuterStride<>(row_stride)) = dz;
        dh_next.noalias() = dz * u.transpose();
        du.noalias() += cache->h[p].transpose() * dz;
        dc_next = dc_prev;
      }
      const auto dzm = as_mat(std::as_const(dzs), batch * steps, g4);
      if (x.requires_grad())
        as_mat(x.node()->ensure_grad(), batch * steps, din).noalias() += dzm * as_mat(wts.w.value(), din, g4).transpose();
      if (wts.w.requires_grad())
        as_mat(wts.w.node()->ensure_grad(), din, g4).noalias() +=
            as_mat(x.value(), batch * steps, din).transpose() * dzm;
      if (wts.u.requires_grad()) as_mat(wts.u.node()->ensure_grad(), h, g4) += du;
      if (wts.b.requires_grad()) as_mat(wts.b.node()->ensure_grad(), 1, g4) += dzm.colwise().sum();
    });
  }
  return out;
}

template <typename T>
Var<T> bilstm(Tape<T>& tape, const Var<T>& x, const LstmWeights<T>& fwd, const LstmWeights<T>& bwd, LstmReturn ret) {
  auto f = lstm(tape, x, fwd, false, ret);
  auto r = lstm(tape, x, bwd, true, ret);
  return concat_last(tape, std::vector<Var<T>>{f, r});
}

#define CAMC_INSTANTIATE(T)                                                                                        \
  template std::pair<Var<T>, Var<T>> lstm_step(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,              \
                                               const LstmWeights<T>&);                                             \
  template Var<T> lstm(Tape<T>&, const Var<T>&, const LstmWeights<T>&, bool, LstmReturn);                          \
  template Var<T> bilstm(Tape<T>&, const Var<T>&, const LstmWeights<T>&, const LstmWeights<T>&, LstmReturn);

CAMC_INSTANTIATE(float)
CAMC_INSTANTIATE(double)

}  // namespace camc::nc

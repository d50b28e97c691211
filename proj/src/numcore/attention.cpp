// SPDX-License-Identifier: Apache-2.0
#include "camc/numcore/attention.hpp"

#include <cmath>
#include <memory>

#include "camc/numcore/ops.hpp"
#include "eigen_util.hpp"

namespace camc::nc {

using detail::CMapM;
using detail::MapM;
using detail::RowMat;

template <typename T>
Var<T> scaled_dot_attention(Tape<T>& tape, const Var<T>& q, const Var<T>& k, const Var<T>& v) {
  auto dims = [](const Shape& s) -> Shape { return s.size() == 2 ? Shape{1, s[0], s[1]} : s; };
  const Shape qs = dims(q.shape()), ks = dims(k.shape()), vs = dims(v.shape());
  if (qs.size() != 3 || ks.size() != 3 || vs.size() != 3) throw_shape("scaled_dot_attention", q.shape(), k.shape());
  if (qs[0] != ks[0] || qs[2] != ks[2]) throw_shape("scaled_dot_attention Q/K", q.shape(), k.shape());
  if (ks[0] != vs[0] || ks[1] != vs[1]) throw_shape("scaled_dot_attention K/V", k.shape(), v.shape());
  const std::size_t batch = qs[0], sq = qs[1], sk = ks[1], dk = qs[2], dv = vs[2];
  const auto isq = static_cast<Eigen::Index>(sq), isk = static_cast<Eigen::Index>(sk);
  const auto idk = static_cast<Eigen::Index>(dk), idv = static_cast<Eigen::Index>(dv);
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));

  auto probs = std::make_shared<std::vector<RowMat<T>>>(batch);
  Shape os = q.shape().size() == 2 ? Shape{sq, dv} : Shape{batch, sq, dv};
  Tensor<T> y(os);
  for (std::size_t b = 0; b < batch; ++b) {
    CMapM<T> qb(q.value().data() + b * sq * dk, isq, idk);
    CMapM<T> kb(k.value().data() + b * sk * dk, isk, idk);
    CMapM<T> vb(v.value().data() + b * sk * dv, isk, idv);
    RowMat<T> s = (qb * kb.transpose()) * scale;
    for (Eigen::Index r = 0; r < isq; ++r) {
      const T mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    MapM<T>(y.data() + b * sq * dv, isq, idv).noalias() = s * vb;
    (*probs)[b] = std::move(s);
  }

  auto out = tape.make(std::move(y), tape.needs(q, k, v));
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      if (out.grad().empty()) return;
      for (std::size_t b = 0; b < batch; ++b) {
        const RowMat<T>& p = (*probs)[b];
        CMapM<T> dy(out.grad().data() + b * sq * dv, isq, idv);
        CMapM<T> qb(q.value().data() + b * sq * dk, isq, idk);
        CMapM<T> kb(k.value().data() + b * sk * dk, isk, idk);
        CMapM<T> vb(v.value().data() + b * sk * dv, isk, idv);
        if (v.requires_grad())
          MapM<T>(v.node()->ensure_grad().data() + b * sk * dv, isk, idv).noalias() += p.transpose() * dy;
        if (q.requires_grad() || k.requires_grad()) {
          RowMat<T> dp = dy * vb.transpose();
          RowMat<T> ds(isq, isk);
          for (Eigen::Index r = 0; r < isq; ++r) {
            const T dot = (dp.row(r).array() * p.row(r).array()).sum();
            ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
          }
          ds *= scale;
          if (q.requires_grad())
            MapM<T>(q.node()->ensure_grad().data() + b * sq * dk, isq, idk).noalias() += ds * kb;
          if (k.requires_grad())
            MapM<T>(k.node()->ensure_grad().data() + b * sk * dk, isk, idk).noalias() += ds.transpose() * qb;
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> multi_head_attention(Tape<T>& tape, const Var<T>& x, const AttentionWeights<T>& w) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) throw ShapeError("multi_head_attention: x must be [B, S, d_model], got " + shape_str(xs));
  const Shape& qs = w.wq.shape();
  if (qs.size() != 3 || qs[1] != xs[2]) throw_shape("multi_head_attention Wq", qs, xs);
  const std::size_t h = qs[0], dmodel = xs[2];
  if (h == 0) throw std::invalid_argument("multi_head_attention: at least one head required");
  if (w.wk.shape() != qs) throw_shape("multi_head_attention Wk", w.wk.shape(), qs);
  const Shape& vs = w.wv.shape();
  if (vs.size() != 3 || vs[0] != h || vs[1] != dmodel) throw_shape("multi_head_attention Wv", vs, qs);
  if (w.wo.shape() != Shape{h * vs[2], dmodel}) throw_shape("multi_head_attention Wo", w.wo.shape(),
                                                            Shape{h * vs[2], dmodel});

  std::vector<Var<T>> heads;
  heads.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    auto qi = matmul(tape, x, select_first(tape, w.wq, i));
    auto ki = matmul(tape, x, select_first(tape, w.wk, i));
    auto vi = matmul(tape, x, select_first(tape, w.wv, i));
    heads.push_back(scaled_dot_attention(tape, qi, ki, vi));
  }
  auto cat = h == 1 ? heads[0] : concat_last(tape, heads);
  return matmul(tape, cat, w.wo);
}

#define CAMC_INSTANTIATE(T)                                                                      \
  template Var<T> scaled_dot_attention(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&); \
  template Var<T> multi_head_attention(Tape<T>&, const Var<T>&, const AttentionWeights<T>&);

CAMC_INSTANTIATE(float)
CAMC_INSTANTIATE(double)

}  // namespace camc::nc

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include "camc/numcore/tensor.hpp"

namespace camc::nc::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapM = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
MapM<T> as_mat(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return MapM<T>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
CMapM<T> as_mat(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return CMapM<T>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

/// Rows of the leading axes collapsed against the last axis.
inline std::size_t leading(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace camc::nc::detail

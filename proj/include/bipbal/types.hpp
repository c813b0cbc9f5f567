// SPDX-License-Identifier: Apache-2.0
//
// Shared dense types and the per-gate batch configuration.
#pragma once

#include <Eigen/Core>

#include <stdexcept>

namespace bipbal {

using Index = Eigen::Index;
using Scalar = double;

// Dense storage is row-major: one row per token, one column per expert.
template <class T>
using DenseMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using DenseVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using ScoreMatrix = DenseMatrix<Scalar>;
using Vector = DenseVector<Scalar>;
using LoadVector = DenseVector<int>;
using IndexMatrix = DenseMatrix<int>;

// Routing scores live in [0, kScoreMax]; the bucketed online variant requires
// strictly sub-unit scores, and ingestion clamps everything to this domain so
// all strategies see identical inputs.
inline constexpr Scalar kScoreEpsilon = 0x1p-32;
inline constexpr Scalar kScoreMax = 1.0 - kScoreEpsilon;

// Shape and iteration parameters of one routing gate.
struct BalanceConfig {
  Index experts = 2;     // m
  Index top_k = 1;       // k experts selected per token
  Index tokens = 1;      // n tokens per batch
  Index dual_iters = 1;  // T coordinate-update sweeps per batch

  // kn/m as an exact real: the balanced per-expert load.
  Scalar mean_load() const {
    return static_cast<Scalar>(top_k * tokens) / static_cast<Scalar>(experts);
  }

  // Per-expert token budget for one batch; ceil(kn/m) when fractional.
  Index capacity() const { return (top_k * tokens + experts - 1) / experts; }

  // 1-based rank of the order statistic used by the expert-side dual update:
  // floor(kn/m) + 1. Coincides with kn/m + 1 when kn/m is integral.
  Index expert_rank() const { return (top_k * tokens) / experts + 1; }

  void validate() const {
    if (experts < 2) {
      throw std::invalid_argument("BalanceConfig: experts must be at least 2");
    }
    if (top_k < 1 || top_k >= experts) {
      throw std::invalid_argument("BalanceConfig: top_k must satisfy 1 <= k < experts");
    }
    if (tokens < 1) {
      throw std::invalid_argument("BalanceConfig: tokens must be at least 1");
    }
    if (dual_iters < 1) {
      throw std::invalid_argument("BalanceConfig: dual_iters must be at least 1");
    }
  }
};

// Routing result for one batch. Stored k-compact: row i lists the k selected
// experts of token i in selection order (descending adjusted score) together
// with their gate values. Gate values are always the raw scores of the
// selected pairs; unselected pairs implicitly carry gate 0.
struct Assignment {
  IndexMatrix experts;  // n x k expert indices
  ScoreMatrix gates;    // n x k raw scores of the selected pairs
  Index expert_count = 0;

  Index tokens() const { return experts.rows(); }
  Index top_k() const { return experts.cols(); }

  LoadVector loads() const {
    LoadVector counts = LoadVector::Zero(expert_count);
    for (Index i = 0; i < experts.rows(); ++i) {
      for (Index l = 0; l < experts.cols(); ++l) {
        ++counts(experts(i, l));
      }
    }
    return counts;
  }

  Scalar total_score() const { return gates.sum(); }
};

}  // namespace bipbal

// SPDX-License-Identifier: Apache-2.0

#include "bipbal/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace bipbal {

Scalar max_vio(const LoadVector& loads) {
  if (loads.size() < 1) {
    throw std::invalid_argument("max_vio: empty load vector");
  }
  if ((loads.array() < 0).any()) {
    throw std::invalid_argument("max_vio: negative load");
  }
  const long long total = loads.cast<long long>().sum();
  if (total <= 0) {
    throw std::invalid_argument("max_vio: zero total load");
  }
  const Scalar mean =
      static_cast<Scalar>(total) / static_cast<Scalar>(loads.size());
  return static_cast<Scalar>(loads.maxCoeff()) / mean - Scalar{1};
}

std::pair<Scalar, Scalar> avg_sup_maxvio(const std::vector<Scalar>& series) {
  if (series.empty()) {
    throw std::invalid_argument("avg_sup_maxvio: empty series");
  }
  const Scalar sum = std::accumulate(series.begin(), series.end(), Scalar{0});
  const Scalar sup = *std::max_element(series.begin(), series.end());
  return {sum / static_cast<Scalar>(series.size()), sup};
}

Scalar aux_loss_value(const ScoreMatrix& scores, const Assignment& assignment,
                      Scalar alpha, const BalanceConfig& cfg) {
  cfg.validate();
  if (scores.rows() != cfg.tokens || scores.cols() != cfg.experts) {
    throw std::invalid_argument("aux_loss_value: score shape mismatch");
  }
  if (assignment.tokens() != cfg.tokens ||
      assignment.expert_count != cfg.experts) {
    throw std::invalid_argument("aux_loss_value: assignment shape mismatch");
  }
  const LoadVector loads = assignment.loads();
  const Scalar scale = static_cast<Scalar>(cfg.experts) /
                       static_cast<Scalar>(cfg.top_k * cfg.tokens);
  const Vector fraction = loads.cast<Scalar>() * scale;
  const Vector mean_prob = scores.colwise().mean().transpose();
  return alpha * fraction.dot(mean_prob);
}

}  // namespace bipbal

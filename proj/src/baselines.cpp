// SPDX-License-Identifier: Apache-2.0

#include "bipbal/baselines.hpp"

#include "bipbal/routing.hpp"

#include <stdexcept>
#include <vector>

namespace bipbal {

namespace {

Assignment route_with_offsets(const ScoreMatrix& scores, const Vector& offsets,
                              Index top_k) {
  const Index n = scores.rows();
  const Index m = scores.cols();
  IndexMatrix experts(n, top_k);
  LoadVector loads = LoadVector::Zero(m);
  std::vector<int> picked;
  for (Index i = 0; i < n; ++i) {
    select_topk_adjusted(scores.row(i).transpose(), offsets, loads, top_k,
                         picked);
    for (Index l = 0; l < top_k; ++l) {
      const int j = picked[static_cast<std::size_t>(l)];
      experts(i, l) = j;
      ++loads(j);
    }
  }
  return build_gates(scores, experts);
}

}  // namespace

Assignment route_greedy(const ScoreMatrix& scores, Index top_k) {
  return route_with_offsets(scores, Vector::Zero(scores.cols()), top_k);
}

Assignment route_lossfree(const ScoreMatrix& scores, const BiasState& state,
                          Index top_k) {
  const Index m = scores.cols();
  if (state.bias.size() == 0) {
    return route_with_offsets(scores, Vector::Zero(m), top_k);
  }
  if (state.bias.size() != m) {
    throw std::invalid_argument("route_lossfree: bias size mismatch");
  }
  return route_with_offsets(scores, -state.bias, top_k);
}

BiasState update_bias(const BiasState& state, const LoadVector& loads,
                      const BalanceConfig& cfg) {
  cfg.validate();
  if (loads.size() != cfg.experts) {
    throw std::invalid_argument("update_bias: load size mismatch");
  }
  if (!(state.rate > 0)) {
    throw std::invalid_argument("update_bias: rate must be positive");
  }
  BiasState next = state;
  if (next.bias.size() == 0) {
    next.bias = Vector::Zero(cfg.experts);
  } else if (next.bias.size() != cfg.experts) {
    throw std::invalid_argument("update_bias: bias size mismatch");
  }
  const Scalar mean = cfg.mean_load();
  for (Index j = 0; j < cfg.experts; ++j) {
    const Scalar load = static_cast<Scalar>(loads(j));
    if (load < mean) {
      next.bias(j) += next.rate;
    } else if (load > mean) {
      next.bias(j) -= next.rate;
    }
  }
  return next;
}

}  // namespace bipbal

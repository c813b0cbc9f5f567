// SPDX-License-Identifier: Apache-2.0

#include "bipbal/dual_balancer.hpp"

#include "bipbal/order_stats.hpp"
#include "bipbal/routing.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace bipbal {

namespace {

void check_scores(const ScoreMatrix& scores) {
  if ((scores.array() < Scalar{0}).any() ||
      (scores.array() > kScoreMax).any()) {
    throw std::invalid_argument("scores must lie in [0, 1 - 2^-32]");
  }
}

}  // namespace

Vector update_token_dual(const ScoreMatrix& scores, const Vector& expert_dual,
                         Index top_k) {
  const Index n = scores.rows();
  const Index m = scores.cols();
  if (expert_dual.size() != m) {
    throw std::invalid_argument("update_token_dual: expert_dual size mismatch");
  }
  if (top_k < 1 || top_k >= m) {
    throw std::invalid_argument("update_token_dual: need 1 <= k < experts");
  }

  Vector token_dual(n);
  std::vector<Scalar> buf(static_cast<std::size_t>(m));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      buf[static_cast<std::size_t>(j)] = scores(i, j) - expert_dual(j);
    }
    token_dual(i) = std::max(Scalar{0}, kth_largest_inplace(buf, top_k + 1));
  }
  return token_dual;
}

Vector update_expert_dual(const ScoreMatrix& scores, const Vector& token_dual,
                          const BalanceConfig& cfg) {
  cfg.validate();
  const Index n = scores.rows();
  const Index m = scores.cols();
  if (n != cfg.tokens || m != cfg.experts) {
    throw std::invalid_argument("update_expert_dual: score shape mismatch");
  }
  if (token_dual.size() != n) {
    throw std::invalid_argument("update_expert_dual: token_dual size mismatch");
  }

  const Index rank = cfg.expert_rank();
  Vector expert_dual(m);
  std::vector<Scalar> buf(static_cast<std::size_t>(n));
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) {
      buf[static_cast<std::size_t>(i)] = scores(i, j) - token_dual(i);
    }
    expert_dual(j) = std::max(Scalar{0}, kth_largest_inplace(buf, rank));
  }
  return expert_dual;
}

Scalar dual_objective(const ScoreMatrix& scores, const Vector& token_dual,
                      const Vector& expert_dual, const BalanceConfig& cfg) {
  if (scores.rows() != token_dual.size() ||
      scores.cols() != expert_dual.size()) {
    throw std::invalid_argument("dual_objective: size mismatch");
  }
  const ScoreMatrix slack =
      (scores.rowwise() - expert_dual.transpose()).colwise() - token_dual;
  return static_cast<Scalar>(cfg.top_k) * token_dual.sum() +
         cfg.mean_load() * expert_dual.sum() +
         slack.cwiseMax(Scalar{0}).sum();
}

Assignment balance_batch(const ScoreMatrix& scores, DualState& state,
                         const BalanceConfig& cfg,
                         std::vector<Scalar>* objective_trace) {
  cfg.validate();
  const Index n = scores.rows();
  const Index m = scores.cols();
  if (n != cfg.tokens || m != cfg.experts) {
    throw std::invalid_argument("balance_batch: score shape mismatch");
  }
  check_scores(scores);

  if (state.expert_dual.size() == 0) {
    state.expert_dual = Vector::Zero(m);
  } else if (state.expert_dual.size() != m) {
    throw std::invalid_argument("balance_batch: stale expert_dual size");
  }

  Vector q = state.expert_dual;
  Vector p = Vector::Zero(n);
  if (objective_trace != nullptr) {
    objective_trace->clear();
    objective_trace->push_back(dual_objective(scores, p, q, cfg));
  }
  for (Index t = 0; t < cfg.dual_iters; ++t) {
    p = update_token_dual(scores, q, cfg.top_k);
    if (objective_trace != nullptr) {
      objective_trace->push_back(dual_objective(scores, p, q, cfg));
    }
    q = update_expert_dual(scores, p, cfg);
    if (objective_trace != nullptr) {
      objective_trace->push_back(dual_objective(scores, p, q, cfg));
    }
  }

  IndexMatrix experts(n, cfg.top_k);
  LoadVector loads = LoadVector::Zero(m);
  std::vector<int> picked;
  for (Index i = 0; i < n; ++i) {
    select_topk_adjusted(scores.row(i).transpose(), q, loads, cfg.top_k,
                         picked);
    for (Index l = 0; l < cfg.top_k; ++l) {
      const int j = picked[static_cast<std::size_t>(l)];
      experts(i, l) = j;
      ++loads(j);
    }
  }

  state.expert_dual = q;
  state.last_dual_objective = dual_objective(scores, p, q, cfg);
  return build_gates(scores, experts);
}

}  // namespace bipbal

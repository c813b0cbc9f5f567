// SPDX-License-Identifier: Apache-2.0

#include "bipbal/oracle.hpp"

#include "bipbal/dual_balancer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

namespace bipbal {

namespace {

constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

void check_instance(const ScoreMatrix& scores, const BalanceConfig& cfg) {
  cfg.validate();
  if (scores.rows() != cfg.tokens || scores.cols() != cfg.experts) {
    throw std::invalid_argument("oracle: score shape mismatch");
  }
  if ((scores.array() < Scalar{0}).any() ||
      (scores.array() > kScoreMax).any()) {
    throw std::invalid_argument("oracle: scores must lie in [0, 1 - 2^-32]");
  }
}

// All k-subsets of {0..m-1} in lexicographic order.
std::vector<std::vector<int>> k_subsets(Index m, Index k) {
  std::vector<std::vector<int>> subsets;
  std::vector<int> cur(static_cast<std::size_t>(k));
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    subsets.push_back(cur);
    int i = static_cast<int>(k) - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] ==
                         static_cast<int>(m - k) + i) {
      --i;
    }
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < cur.size(); ++j) {
      cur[j] = cur[j - 1] + 1;
    }
  }
  return subsets;
}

// Feasible warm start: each token takes the k least-loaded experts, preferring
// higher scores then lower indices among equal loads. Keeps loads within one
// of each other, so the capacity ceil(kn/m) is never exceeded.
ExactSolution balanced_greedy(const ScoreMatrix& scores,
                              const BalanceConfig& cfg) {
  const Index n = cfg.tokens;
  const Index m = cfg.experts;
  ExactSolution out;
  out.assignment = DenseMatrix<std::uint8_t>::Zero(n, m);
  LoadVector loads = LoadVector::Zero(m);
  std::vector<int> order(static_cast<std::size_t>(m));
  for (Index i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (loads(a) != loads(b)) return loads(a) < loads(b);
      if (scores(i, a) != scores(i, b)) return scores(i, a) > scores(i, b);
      return a < b;
    });
    for (Index l = 0; l < cfg.top_k; ++l) {
      const int j = order[static_cast<std::size_t>(l)];
      out.assignment(i, j) = 1;
      ++loads(j);
      out.objective += scores(i, j);
    }
  }
  return out;
}

}  // namespace

bool exhaustive_tractable(const BalanceConfig& cfg, double limit) {
  Scalar subset_count = 1.0;
  for (Index i = 0; i < cfg.top_k; ++i) {
    subset_count *= static_cast<Scalar>(cfg.experts - i) /
                    static_cast<Scalar>(i + 1);
  }
  return static_cast<Scalar>(cfg.tokens) * std::log(subset_count) <=
         std::log(limit);
}

ExactSolution solve_exhaustive(const ScoreMatrix& scores,
                               const BalanceConfig& cfg) {
  check_instance(scores, cfg);
  const Index n = cfg.tokens;
  const Index m = cfg.experts;
  const Index k = cfg.top_k;

  if (!exhaustive_tractable(cfg, 1e7)) {
    throw std::invalid_argument(
        "solve_exhaustive: search space exceeds 1e7 leaves");
  }

  const std::vector<std::vector<int>> subsets = k_subsets(m, k);
  const std::size_t num_subsets = subsets.size();

  // Per-token subset scores and the optimistic suffix bound.
  std::vector<std::vector<Scalar>> subset_score(static_cast<std::size_t>(n));
  std::vector<Scalar> suffix_max(static_cast<std::size_t>(n) + 1, 0.0);
  for (Index i = n - 1; i >= 0; --i) {
    auto& row = subset_score[static_cast<std::size_t>(i)];
    row.resize(num_subsets);
    Scalar best = -kInf;
    for (std::size_t s = 0; s < num_subsets; ++s) {
      Scalar sum = 0.0;
      for (int j : subsets[s]) sum += scores(i, j);
      row[s] = sum;
      best = std::max(best, sum);
    }
    suffix_max[static_cast<std::size_t>(i)] =
        suffix_max[static_cast<std::size_t>(i) + 1] + best;
  }

  ExactSolution best = balanced_greedy(scores, cfg);
  const Index capacity = cfg.capacity();
  LoadVector loads = LoadVector::Zero(m);
  std::vector<std::size_t> choice(static_cast<std::size_t>(n));
  std::vector<std::size_t> best_choice;

  auto dfs = [&](auto&& self, Index i, Scalar acc) -> void {
    if (acc + suffix_max[static_cast<std::size_t>(i)] <= best.objective) {
      return;
    }
    if (i == n) {
      best.objective = acc;
      best_choice = choice;
      return;
    }
    for (std::size_t s = 0; s < num_subsets; ++s) {
      bool fits = true;
      for (int j : subsets[s]) {
        if (loads(j) + 1 > capacity) {
          fits = false;
          break;
        }
      }
      if (!fits) continue;
      for (int j : subsets[s]) ++loads(j);
      choice[static_cast<std::size_t>(i)] = s;
      self(self, i + 1, acc + subset_score[static_cast<std::size_t>(i)][s]);
      for (int j : subsets[s]) --loads(j);
    }
  };
  dfs(dfs, 0, 0.0);

  if (!best_choice.empty()) {
    best.assignment.setZero();
    for (Index i = 0; i < n; ++i) {
      for (int j : subsets[best_choice[static_cast<std::size_t>(i)]]) {
        best.assignment(i, j) = 1;
      }
    }
  }
  return best;
}

namespace {

// Successive shortest augmenting paths with Dijkstra over reduced costs.
// All forward costs are non-negative by construction, so zero potentials are
// valid initially.
class MinCostFlow {
 public:
  explicit MinCostFlow(int nodes) : graph_(static_cast<std::size_t>(nodes)) {}

  void add_edge(int u, int v, long long cap, Scalar cost) {
    graph_[static_cast<std::size_t>(u)].push_back(
        {v, cap, cost, static_cast<int>(graph_[static_cast<std::size_t>(v)].size())});
    graph_[static_cast<std::size_t>(v)].push_back(
        {u, 0, -cost, static_cast<int>(graph_[static_cast<std::size_t>(u)].size()) - 1});
  }

  bool saturated(int u, int edge) const {
    return graph_[static_cast<std::size_t>(u)][static_cast<std::size_t>(edge)]
               .cap == 0;
  }

  int last_edge_index(int u) const {
    return static_cast<int>(graph_[static_cast<std::size_t>(u)].size()) - 1;
  }

  long long push(int source, int sink, long long target) {
    const std::size_t nodes = graph_.size();
    std::vector<Scalar> potential(nodes, 0.0);
    std::vector<Scalar> dist(nodes);
    std::vector<int> prev_node(nodes);
    std::vector<int> prev_edge(nodes);
    long long flow = 0;

    while (flow < target) {
      dist.assign(nodes, kInf);
      dist[static_cast<std::size_t>(source)] = 0.0;
      using Item = std::pair<Scalar, int>;
      std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue;
      queue.push({0.0, source});
      while (!queue.empty()) {
        const auto [d, u] = queue.top();
        queue.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        const auto& edges = graph_[static_cast<std::size_t>(u)];
        for (std::size_t e = 0; e < edges.size(); ++e) {
          const Edge& edge = edges[e];
          if (edge.cap <= 0) continue;
          const Scalar nd = d + edge.cost +
                            potential[static_cast<std::size_t>(u)] -
                            potential[static_cast<std::size_t>(edge.to)];
          if (nd < dist[static_cast<std::size_t>(edge.to)] - 1e-15) {
            dist[static_cast<std::size_t>(edge.to)] = nd;
            prev_node[static_cast<std::size_t>(edge.to)] = u;
            prev_edge[static_cast<std::size_t>(edge.to)] = static_cast<int>(e);
            queue.push({nd, edge.to});
          }
        }
      }
      if (dist[static_cast<std::size_t>(sink)] == kInf) break;
      for (std::size_t v = 0; v < nodes; ++v) {
        if (dist[v] < kInf) potential[v] += dist[v];
      }

      long long bottleneck = target - flow;
      for (int v = sink; v != source;
           v = prev_node[static_cast<std::size_t>(v)]) {
        const Edge& edge =
            graph_[static_cast<std::size_t>(
                prev_node[static_cast<std::size_t>(v)])]
                  [static_cast<std::size_t>(prev_edge[static_cast<std::size_t>(v)])];
        bottleneck = std::min(bottleneck, edge.cap);
      }
      for (int v = sink; v != source;
           v = prev_node[static_cast<std::size_t>(v)]) {
        Edge& edge = graph_[static_cast<std::size_t>(
            prev_node[static_cast<std::size_t>(v)])]
                           [static_cast<std::size_t>(
                               prev_edge[static_cast<std::size_t>(v)])];
        edge.cap -= bottleneck;
        graph_[static_cast<std::size_t>(v)][static_cast<std::size_t>(edge.rev)]
            .cap += bottleneck;
      }
      flow += bottleneck;
    }
    return flow;
  }

 private:
  struct Edge {
    int to;
    long long cap;
    Scalar cost;
    int rev;
  };
  std::vector<std::vector<Edge>> graph_;
};

}  // namespace

ExactSolution solve_flow(const ScoreMatrix& scores, const BalanceConfig& cfg) {
  check_instance(scores, cfg);
  const Index n = cfg.tokens;
  const Index m = cfg.experts;
  const Index k = cfg.top_k;
  if ((k * n) % m != 0) {
    throw std::invalid_argument("solve_flow: kn/m must be integral");
  }
  if (n * m > 1'000'000) {
    throw std::invalid_argument("solve_flow: instance exceeds 1e6 entries");
  }
  const long long capacity = static_cast<long long>(k * n / m);

  // Nodes: 0 source, 1..n tokens, n+1..n+m experts, n+m+1 sink. Each routed
  // pair costs 1 - s_ij > 0, so minimizing cost maximizes the total score.
  const int source = 0;
  const int sink = static_cast<int>(n + m) + 1;
  MinCostFlow flow(sink + 1);
  for (Index i = 0; i < n; ++i) {
    flow.add_edge(source, static_cast<int>(i) + 1, k, 0.0);
  }
  DenseMatrix<int> pair_edge(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      flow.add_edge(static_cast<int>(i) + 1, static_cast<int>(n + j) + 1, 1,
                    Scalar{1} - scores(i, j));
      pair_edge(i, j) = flow.last_edge_index(static_cast<int>(i) + 1);
    }
  }
  for (Index j = 0; j < m; ++j) {
    flow.add_edge(static_cast<int>(n + j) + 1, sink, capacity, 0.0);
  }

  const long long pushed = flow.push(source, sink, static_cast<long long>(k * n));
  if (pushed != k * n) {
    throw std::logic_error("solve_flow: failed to route all tokens");
  }

  ExactSolution out;
  out.assignment = DenseMatrix<std::uint8_t>::Zero(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      if (flow.saturated(static_cast<int>(i) + 1, pair_edge(i, j))) {
        out.assignment(i, j) = 1;
        out.objective += scores(i, j);
      }
    }
  }
  return out;
}

Scalar verify_weak_duality(const ScoreMatrix& scores, const Vector& token_dual,
                           const Vector& expert_dual, const BalanceConfig& cfg,
                           const ExactSolution& solution) {
  const Scalar gap =
      dual_objective(scores, token_dual, expert_dual, cfg) - solution.objective;
  if (gap < -kWeakDualityTol) {
    throw std::logic_error(
        "verify_weak_duality: dual value undercuts a feasible assignment");
  }
  return gap;
}

}  // namespace bipbal

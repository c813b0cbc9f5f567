// SPDX-License-Identifier: Apache-2.0
//
// Per-token online balancing with exact expert histories or constant-space
// bucketed approximations of them.
#pragma once

#include "bipbal/types.hpp"

#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <vector>

namespace bipbal {

// Multiset of historical (s_j - p) values that answers "rank-th largest of
// content plus one candidate" in O(log size). Split into the rank largest
// (top_) and the remainder (rest_), with min(top_) >= max(rest_).
class ExpertHistory {
 public:
  explicit ExpertHistory(Index rank);

  void insert(Scalar value);
  void erase(Scalar value);  // value must be present
  void clear();
  Index size() const { return static_cast<Index>(top_.size() + rest_.size()); }

  // rank-th largest of content with `candidate` counted as well; nullopt when
  // content plus candidate still holds fewer than rank values.
  std::optional<Scalar> kth_largest_with(Scalar candidate) const;

 private:
  Index rank_;
  std::multiset<Scalar> top_;   // the rank_ largest values
  std::multiset<Scalar> rest_;  // everything below them
};

// Fixed array of counters over [l/b, (l+1)/b) sub-intervals of [0, 1).
// Callers feed it only strictly positive threshold candidates, so a
// rank query past the counted mass means the true statistic clamps to
// zero.  Storage never grows.
class BucketHistogram {
 public:
  explicit BucketHistogram(Index buckets);

  void insert(Scalar value);  // value must lie in [0, 1)
  void clear();
  std::int64_t total() const { return total_; }
  Index bucket_count() const { return static_cast<Index>(counts_.size()); }

  // Interpolated rank-th largest of the counted values, with `candidate`
  // counted as well when present; zero when fewer than rank values are
  // counted. Each value is assumed uniform within its bucket.
  Scalar interpolated_kth(std::optional<Scalar> candidate, Index rank) const;

 private:
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

// What happens to per-expert histories as the stream outgrows one batch:
// roll to a fresh window every n tokens, slide over the last n tokens, or
// keep growing without bound.
enum class WindowMode { kBatch, kSliding, kNone };

struct OnlineConfig {
  BalanceConfig base;
  Index buckets = 0;  // 0 = exact multiset histories, > 0 = histograms
  WindowMode window = WindowMode::kBatch;
  bool reset_keeps_dual = true;  // window resets preserve q by default

  void validate() const;
};

// Streaming router for one gate. Each step selects the token's top-k by
// price-adjusted score first, then refreshes the duals from the recorded
// history, then records the final (s_j - p) candidate for every expert.
class OnlineGate {
 public:
  explicit OnlineGate(const OnlineConfig& cfg);

  std::vector<int> step(Eigen::Ref<const Vector> scores);
  void step_into(Eigen::Ref<const Vector> scores, std::vector<int>& out);

  // Clears histories and in-window loads; q survives unless configured
  // otherwise. Idempotent.
  void reset_window();

  const Vector& expert_dual() const { return q_; }
  const LoadVector& window_loads() const { return window_loads_; }
  long long tokens_seen() const { return tokens_seen_; }
  const OnlineConfig& config() const { return cfg_; }

  // Accounting estimate of the resident state, counting history nodes and
  // histogram counters; constant over time for the bucketed variant.
  std::size_t state_bytes() const;

 private:
  void roll_if_window_full();
  void record_candidates(const Vector& candidates);

  OnlineConfig cfg_;
  Vector q_;
  LoadVector window_loads_;
  std::vector<ExpertHistory> histories_;
  std::vector<BucketHistogram> histograms_;
  std::vector<std::deque<Scalar>> inserted_;      // sliding eviction order
  std::deque<std::vector<int>> selections_;       // sliding load bookkeeping
  long long tokens_seen_ = 0;
  Index tokens_in_window_ = 0;
};

// Runs one batch through the gate token by token and assembles the routing
// result with raw-score gates.
Assignment online_route_batch(OnlineGate& gate, const ScoreMatrix& scores);

}  // namespace bipbal

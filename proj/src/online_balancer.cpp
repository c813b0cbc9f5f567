// SPDX-License-Identifier: Apache-2.0

#include "bipbal/online_balancer.hpp"

#include "bipbal/order_stats.hpp"
#include "bipbal/routing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bipbal {

ExpertHistory::ExpertHistory(Index rank) : rank_(rank) {
  if (rank < 1) {
    throw std::invalid_argument("ExpertHistory: rank must be at least 1");
  }
}

void ExpertHistory::insert(Scalar value) {
  if (static_cast<Index>(top_.size()) < rank_) {
    top_.insert(value);
    return;
  }
  const auto boundary = top_.begin();  // smallest of the rank_ largest
  if (value > *boundary) {
    rest_.insert(*boundary);
    top_.erase(boundary);
    top_.insert(value);
  } else {
    rest_.insert(value);
  }
}

void ExpertHistory::erase(Scalar value) {
  if (const auto it = top_.find(value); it != top_.end()) {
    top_.erase(it);
    if (!rest_.empty()) {
      const auto promote = std::prev(rest_.end());
      top_.insert(*promote);
      rest_.erase(promote);
    }
    return;
  }
  if (const auto it = rest_.find(value); it != rest_.end()) {
    rest_.erase(it);
    return;
  }
  throw std::logic_error("ExpertHistory: erasing a value that is not stored");
}

void ExpertHistory::clear() {
  top_.clear();
  rest_.clear();
}

std::optional<Scalar> ExpertHistory::kth_largest_with(Scalar candidate) const {
  if (size() + 1 < rank_) return std::nullopt;
  if (static_cast<Index>(top_.size()) < rank_) {
    // Content plus candidate has exactly rank_ values and rest_ is empty,
    // so the rank_-th largest is the minimum of them all.
    if (top_.empty()) return candidate;
    return std::min(*top_.begin(), candidate);
  }
  const Scalar boundary = *top_.begin();
  if (!(candidate > boundary)) return boundary;
  if (rank_ == 1) return candidate;
  return std::min(*std::next(top_.begin()), candidate);
}

BucketHistogram::BucketHistogram(Index buckets)
    : counts_(static_cast<std::size_t>(std::max<Index>(buckets, 0)), 0) {
  if (buckets < 1) {
    throw std::invalid_argument("BucketHistogram: need at least one bucket");
  }
}

namespace {

Index bucket_of(Scalar value, Index buckets) {
  const Index raw =
      static_cast<Index>(std::floor(value * static_cast<Scalar>(buckets)));
  return std::clamp<Index>(raw, 0, buckets - 1);
}

}  // namespace

void BucketHistogram::insert(Scalar value) {
  if (!(value >= 0.0) || !(value < 1.0)) {
    throw std::invalid_argument("BucketHistogram: value outside [0, 1)");
  }
  ++counts_[static_cast<std::size_t>(bucket_of(value, bucket_count()))];
  ++total_;
}

void BucketHistogram::clear() {
  std::fill(counts_.begin(), counts_.end(), 0);
  total_ = 0;
}

Scalar BucketHistogram::interpolated_kth(std::optional<Scalar> candidate,
                                         Index rank) const {
  if (rank < 1) {
    throw std::invalid_argument("BucketHistogram: rank must be at least 1");
  }
  const Index buckets = bucket_count();
  Index candidate_bucket = -1;
  if (candidate.has_value()) {
    if (!(*candidate >= 0.0) || !(*candidate < 1.0)) {
      throw std::invalid_argument("BucketHistogram: candidate outside [0, 1)");
    }
    candidate_bucket = bucket_of(*candidate, buckets);
  }

  std::int64_t counted = total_ + (candidate.has_value() ? 1 : 0);
  if (counted < rank) return 0.0;

  // Walk from the top bucket; `above` counts values in strictly higher
  // buckets than the one holding the rank-th largest.
  std::int64_t above = 0;
  for (Index l = buckets - 1; l >= 0; --l) {
    std::int64_t in_bucket = counts_[static_cast<std::size_t>(l)];
    if (l == candidate_bucket) ++in_bucket;
    if (above + in_bucket >= rank) {
      const Scalar width = Scalar{1} / static_cast<Scalar>(buckets);
      const Scalar upper = static_cast<Scalar>(l + 1) * width;
      const Scalar depth = static_cast<Scalar>(rank - above) /
                           static_cast<Scalar>(in_bucket);
      return upper - depth * width;
    }
    above += in_bucket;
  }
  return 0.0;  // unreachable: counted >= rank guarantees a bucket is found
}

void OnlineConfig::validate() const {
  base.validate();
  if (buckets < 0) {
    throw std::invalid_argument("OnlineConfig: negative bucket count");
  }
  if (buckets > 0 && window == WindowMode::kSliding) {
    throw std::invalid_argument(
        "OnlineConfig: bucketed histograms cannot slide; use batch windows");
  }
}

OnlineGate::OnlineGate(const OnlineConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const Index m = cfg_.base.experts;
  q_ = Vector::Zero(m);
  window_loads_ = LoadVector::Zero(m);
  if (cfg_.buckets > 0) {
    histograms_.assign(static_cast<std::size_t>(m),
                       BucketHistogram(cfg_.buckets));
  } else {
    histories_.assign(static_cast<std::size_t>(m),
                      ExpertHistory(cfg_.base.expert_rank()));
    if (cfg_.window == WindowMode::kSliding) {
      inserted_.resize(static_cast<std::size_t>(m));
    }
  }
}

std::vector<int> OnlineGate::step(Eigen::Ref<const Vector> scores) {
  std::vector<int> out;
  step_into(scores, out);
  return out;
}

void OnlineGate::roll_if_window_full() {
  if (cfg_.window == WindowMode::kBatch &&
      tokens_in_window_ == cfg_.base.tokens) {
    reset_window();
  }
}

void OnlineGate::step_into(Eigen::Ref<const Vector> scores,
                           std::vector<int>& out) {
  const Index m = cfg_.base.experts;
  if (scores.size() != m) {
    throw std::invalid_argument("OnlineGate: score size mismatch");
  }
  if ((scores.array() < Scalar{0}).any() ||
      (scores.array() > kScoreMax).any()) {
    throw std::invalid_argument("OnlineGate: scores must lie in [0, 1 - 2^-32]");
  }
  roll_if_window_full();

  // Selection precedes the dual refresh: this token is routed with the
  // prices learned from the stream so far.
  if (cfg_.window == WindowMode::kSliding &&
      static_cast<Index>(selections_.size()) == cfg_.base.tokens) {
    for (int j : selections_.front()) --window_loads_(j);
    selections_.pop_front();
  }
  select_topk_adjusted(scores, q_, window_loads_, cfg_.base.top_k, out);
  for (Index l = 0; l < cfg_.base.top_k; ++l) {
    ++window_loads_(out[static_cast<std::size_t>(l)]);
  }
  if (cfg_.window == WindowMode::kSliding) {
    selections_.push_back(out);
  }

  const Index rank = cfg_.base.expert_rank();
  std::vector<Scalar> buf(static_cast<std::size_t>(m));
  Vector candidates(m);
  for (Index t = 0; t < cfg_.base.dual_iters; ++t) {
    for (Index j = 0; j < m; ++j) {
      buf[static_cast<std::size_t>(j)] = scores(j) - q_(j);
    }
    const Scalar p =
        std::max(Scalar{0}, kth_largest_inplace(buf, cfg_.base.top_k + 1));
    candidates = scores.array() - p;
    if (cfg_.buckets > 0) {
      // Only strictly positive candidates are counted: values at exactly
      // zero behave like clamped negatives in the exact variant, and
      // counting them would interpolate a spurious positive q.
      for (Index j = 0; j < m; ++j) {
        const auto& hist = histograms_[static_cast<std::size_t>(j)];
        const std::optional<Scalar> cand =
            candidates(j) > 0.0 ? std::optional<Scalar>(candidates(j))
                                : std::nullopt;
        q_(j) = hist.interpolated_kth(cand, rank);
      }
    } else {
      for (Index j = 0; j < m; ++j) {
        const auto value =
            histories_[static_cast<std::size_t>(j)].kth_largest_with(
                candidates(j));
        q_(j) = std::max(Scalar{0}, value.value_or(Scalar{0}));
      }
    }
  }

  record_candidates(candidates);
  ++tokens_seen_;
  ++tokens_in_window_;
}

void OnlineGate::record_candidates(const Vector& candidates) {
  const Index m = cfg_.base.experts;
  if (cfg_.buckets > 0) {
    for (Index j = 0; j < m; ++j) {
      if (candidates(j) > 0.0) {
        histograms_[static_cast<std::size_t>(j)].insert(candidates(j));
      }
    }
    return;
  }
  for (Index j = 0; j < m; ++j) {
    auto& history = histories_[static_cast<std::size_t>(j)];
    if (cfg_.window == WindowMode::kSliding) {
      auto& queue = inserted_[static_cast<std::size_t>(j)];
      if (static_cast<Index>(queue.size()) == cfg_.base.tokens) {
        history.erase(queue.front());
        queue.pop_front();
      }
      queue.push_back(candidates(j));
    }
    history.insert(candidates(j));
  }
}

void OnlineGate::reset_window() {
  for (auto& history : histories_) history.clear();
  for (auto& histogram : histograms_) histogram.clear();
  for (auto& queue : inserted_) queue.clear();
  selections_.clear();
  window_loads_.setZero();
  tokens_in_window_ = 0;
  if (!cfg_.reset_keeps_dual) q_.setZero();
}

std::size_t OnlineGate::state_bytes() const {
  // Estimate per stored value: payload plus tree-node bookkeeping for the
  // multisets, a plain counter word for histogram buckets.
  constexpr std::size_t kNodeBytes = sizeof(Scalar) + 4 * sizeof(void*);
  std::size_t bytes = sizeof(OnlineGate);
  bytes += static_cast<std::size_t>(q_.size()) * sizeof(Scalar);
  bytes += static_cast<std::size_t>(window_loads_.size()) * sizeof(int);
  for (const auto& history : histories_) {
    bytes += static_cast<std::size_t>(history.size()) * kNodeBytes;
  }
  for (const auto& histogram : histograms_) {
    bytes += static_cast<std::size_t>(histogram.bucket_count()) *
             sizeof(std::int64_t);
  }
  for (const auto& queue : inserted_) {
    bytes += queue.size() * sizeof(Scalar);
  }
  for (const auto& selection : selections_) {
    bytes += selection.size() * sizeof(int);
  }
  return bytes;
}

Assignment online_route_batch(OnlineGate& gate, const ScoreMatrix& scores) {
  const Index n = scores.rows();
  const Index k = gate.config().base.top_k;
  IndexMatrix experts(n, k);
  std::vector<int> picked;
  for (Index i = 0; i < n; ++i) {
    gate.step_into(scores.row(i).transpose(), picked);
    for (Index l = 0; l < k; ++l) {
      experts(i, l) = picked[static_cast<std::size_t>(l)];
    }
  }
  return build_gates(scores, experts);
}

}  // namespace bipbal

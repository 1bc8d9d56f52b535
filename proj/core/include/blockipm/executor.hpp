#pragma once

#include <atomic>
#include <optional>
#include <exception>
#include <functional>
#include <thread>
#include <utility>
#include <vector>

#include "blockipm/types.hpp"

namespace blockipm {

/// Contiguous split of blocks 0..N-1 into G groups whose sizes differ by at
/// most one (leading groups take the extra block).
struct Partition {
  index_t N = 0;
  std::vector<std::pair<index_t, index_t>> ranges;  // [lo, hi)

  index_t groups() const { return index_t(ranges.size()); }
  index_t group_size(index_t g) const { return ranges[size_t(g)].second - ranges[size_t(g)].first; }
};

Partition partition(index_t N, index_t G);

enum class ReduceOrder {
  deterministic,  // fixed half-split tree over indices: bitwise reproducible
  fast,           // flat left-to-right accumulation
};

struct ExecMode {
  index_t worker_count = 1;
  ReduceOrder order = ReduceOrder::deterministic;
};

/// Fixed-shape binary combination: split at the midpoint, recurse. Group
/// ranges that align with tree nodes (powers of two) combine identically no
/// matter how blocks are grouped, which is what makes deterministic-mode runs
/// bitwise invariant across group counts.
template <typename T, typename Combine>
T tree_combine(std::vector<T>& items, index_t lo, index_t hi, Combine&& comb) {
  if (hi - lo == 1) return std::move(items[size_t(lo)]);
  const index_t mid = lo + (hi - lo) / 2;
  T left = tree_combine(items, lo, mid, comb);
  T right = tree_combine(items, mid, hi, comb);
  return comb(std::move(left), std::move(right));
}

/// Same fixed tree shape over an index range with results produced on
/// demand: leaf(i) yields element i's contribution.
template <typename T, typename Leaf, typename Combine>
T range_tree(index_t lo, index_t hi, Leaf&& leaf, Combine&& comb) {
  if (hi - lo == 1) return leaf(lo);
  const index_t mid = lo + (hi - lo) / 2;
  T left = range_tree<T>(lo, mid, leaf, comb);
  T right = range_tree<T>(mid, hi, leaf, comb);
  return comb(std::move(left), std::move(right));
}

/// Fork-join pool: runs `work(group, lo, hi)` for every group of the
/// partition on up to `worker_count` threads. Results are returned ordered by
/// group index regardless of completion order; the failure with the lowest
/// group index is rethrown.
class Executor {
 public:
  explicit Executor(ExecMode mode) : mode_(mode) {
    if (mode_.worker_count < 1) throw std::invalid_argument("worker_count must be >= 1");
  }

  const ExecMode& mode() const { return mode_; }
  bool deterministic() const { return mode_.order == ReduceOrder::deterministic; }

  template <typename Work>
  auto map_blocks(const Partition& part, Work&& work)
      -> std::vector<decltype(work(index_t(0), index_t(0), index_t(0)))> {
    using R = decltype(work(index_t(0), index_t(0), index_t(0)));
    const index_t G = part.groups();
    std::vector<std::optional<R>> slots(static_cast<size_t>(G));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(G));

    const index_t workers = std::min<index_t>(mode_.worker_count, G);
    if (workers <= 1) {
      for (index_t g = 0; g < G; ++g) {
        auto [lo, hi] = part.ranges[size_t(g)];
        slots[size_t(g)].emplace(work(g, lo, hi));
      }
    } else {
      std::atomic<index_t> counter{0};
      auto run = [&]() {
        for (;;) {
          const index_t g = counter.fetch_add(1);
          if (g >= G) return;
          auto [lo, hi] = part.ranges[size_t(g)];
          try {
            slots[size_t(g)].emplace(work(g, lo, hi));
          } catch (...) {
            errors[size_t(g)] = std::current_exception();
          }
        }
      };
      std::vector<std::thread> pool;
      pool.reserve(size_t(workers));
      for (index_t w = 0; w < workers; ++w) pool.emplace_back(run);
      for (auto& t : pool) t.join();
      for (index_t g = 0; g < G; ++g)
        if (errors[size_t(g)]) std::rethrow_exception(errors[size_t(g)]);
    }
    std::vector<R> results;
    results.reserve(size_t(G));
    for (index_t g = 0; g < G; ++g) results.push_back(std::move(*slots[size_t(g)]));
    return results;
  }

 private:
  ExecMode mode_;
};

/// Sum of G conformable dense matrices. Deterministic order combines along
/// the fixed half-split tree; fast order accumulates left to right.
Matrix all_reduce_sum(std::vector<Matrix> parts, ReduceOrder order);
Vector all_reduce_sum(std::vector<Vector> parts, ReduceOrder order);

}  // namespace blockipm

#include "blockipm/executor.hpp"

#include <stdexcept>

namespace blockipm {

Partition partition(index_t N, index_t G) {
  if (G < 1 || G > N) throw std::invalid_argument("partition: need 1 <= G <= N");
  Partition p;
  p.N = N;
  const index_t base = N / G, rem = N % G;
  index_t lo = 0;
  for (index_t g = 0; g < G; ++g) {
    const index_t size = base + (g < rem ? 1 : 0);
    p.ranges.emplace_back(lo, lo + size);
    lo += size;
  }
  return p;
}

namespace {

template <typename T>
void add_into(T& acc, const T& x);

template <>
void add_into(Matrix& acc, const Matrix& x) {
  if (acc.rows() != x.rows() || acc.cols() != x.cols())
    throw DimensionError("all_reduce_sum: shape mismatch");
  for (size_t i = 0; i < acc.size(); ++i) acc.data()[i] += x.data()[i];
}

template <>
void add_into(Vector& acc, const Vector& x) {
  if (acc.size() != x.size()) throw DimensionError("all_reduce_sum: shape mismatch");
  for (size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

template <typename T>
T reduce_impl(std::vector<T> parts, ReduceOrder order) {
  if (parts.empty()) throw std::invalid_argument("all_reduce_sum: no parts");
  if (order == ReduceOrder::deterministic) {
    return tree_combine(parts, 0, index_t(parts.size()), [](T a, T b) {
      add_into(a, b);
      return a;
    });
  }
  T acc = std::move(parts[0]);
  for (size_t g = 1; g < parts.size(); ++g) add_into(acc, parts[g]);
  return acc;
}

}  // namespace

Matrix all_reduce_sum(std::vector<Matrix> parts, ReduceOrder order) {
  return reduce_impl(std::move(parts), order);
}

Vector all_reduce_sum(std::vector<Vector> parts, ReduceOrder order) {
  return reduce_impl(std::move(parts), order);
}

}  // namespace blockipm

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "spheremix/errors.hpp"

namespace spheremix {

/// Pair counts behind the adjusted Rand index.
struct PairCounts {
  std::int64_t together_both = 0;  // sum_ij C(n_ij, 2)
  std::int64_t together_a = 0;     // sum_i C(a_i, 2)
  std::int64_t together_b = 0;     // sum_j C(b_j, 2)
  std::int64_t total = 0;          // C(n, 2)
};

inline std::int64_t choose2(std::int64_t m) { return m * (m - 1) / 2; }

inline PairCounts contingency_pair_counts(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DomainError("adjusted_rand_index: label vectors differ in length");
  std::map<int, std::int64_t> rows;
  std::map<int, std::int64_t> cols;
  std::map<std::pair<int, int>, std::int64_t> cells;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++rows[a[i]];
    ++cols[b[i]];
    ++cells[{a[i], b[i]}];
  }
  PairCounts pc;
  for (const auto& [_, c] : cells) pc.together_both += choose2(c);
  for (const auto& [_, c] : rows) pc.together_a += choose2(c);
  for (const auto& [_, c] : cols) pc.together_b += choose2(c);
  pc.total = choose2(static_cast<std::int64_t>(a.size()));
  return pc;
}

/// Hubert-Arabie ARI from pair counts. The ratio is formed from exact
/// integers scaled by 2 C(n,2), so a single rounding happens at the end.
/// The 0/0 case only arises for two identical trivial partitions and gives 1.
inline double adjusted_rand_index(const PairCounts& pc) {
  using wide = __int128;  // products reach n^4 / 4
  const wide total = pc.total;
  const wide num = 2 * total * pc.together_both - wide{2} * pc.together_a * pc.together_b;
  const wide den = total * (pc.together_a + pc.together_b) - wide{2} * pc.together_a * pc.together_b;
  if (den == 0) return num == 0 ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  return adjusted_rand_index(contingency_pair_counts(a, b));
}

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  return adjusted_rand_index(std::span<const int>(a), std::span<const int>(b));
}

}  // namespace spheremix

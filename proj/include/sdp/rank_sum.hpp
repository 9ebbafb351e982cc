#pragma once

#include <span>
#include <string>
#include <vector>

namespace sdp::stats {

enum class Tail { kTwoSided, kLess, kGreater };

// "two-sided", "less" or "greater".
Tail parse_tail(const std::string& text);
const char* to_string(Tail tail);

struct RankSumResult {
  double w = 0.0;  // rank sum of the first sample
  double p = 1.0;
  bool exact = false;
};

// Midranks (1-based) of `values`, ties sharing their mean rank.
std::vector<double> midranks(std::span<const double> values);

// Wilcoxon rank-sum test. W sums the midranks of `a` in the pooled sample.
// Pooled sizes up to kExactLimit enumerate every assignment of ranks to `a`;
// larger samples use the tie-corrected normal approximation with a
// continuity correction. kLess asks whether `a` tends to be smaller.
// Requires at least two values in each sample.
RankSumResult rank_sum(std::span<const double> a, std::span<const double> b, Tail tail = Tail::kTwoSided);

inline constexpr std::size_t kExactLimit = 16;

}  // namespace sdp::stats

#include "sdp/rank_sum.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

namespace sdp::stats {

namespace {

constexpr double kTieEpsilon = 1e-9;

double exact_p(const std::vector<double>& ranks, std::size_t na, double w, Tail tail) {
  const std::size_t n = ranks.size();
  const double expected = static_cast<double>(na) * static_cast<double>(n + 1) / 2.0;
  const double observed = std::abs(w - expected);
  std::uint64_t total = 0, hits = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != na) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) s += ranks[i];
    ++total;
    bool extreme = false;
    switch (tail) {
      case Tail::kTwoSided: extreme = std::abs(s - expected) >= observed - kTieEpsilon; break;
      case Tail::kLess: extreme = s <= w + kTieEpsilon; break;
      case Tail::kGreater: extreme = s >= w - kTieEpsilon; break;
    }
    if (extreme) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double normal_p(std::span<const double> pooled, std::size_t na, std::size_t nb, double w, Tail tail) {
  const double n = static_cast<double>(na + nb);
  const double expected = static_cast<double>(na) * (n + 1.0) / 2.0;

  std::vector<double> sorted(pooled.begin(), pooled.end());
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double variance =
      static_cast<double>(na) * static_cast<double>(nb) / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (variance <= 0.0) return 1.0;
  const double sd = std::sqrt(variance);
  const double d = w - expected;
  switch (tail) {
    case Tail::kTwoSided: {
      const double z = std::max(0.0, std::abs(d) - 0.5) / sd;
      return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    }
    case Tail::kLess: return 0.5 * std::erfc(-((d + 0.5) / sd) / std::sqrt(2.0));
    case Tail::kGreater: return 0.5 * std::erfc(((d - 0.5) / sd) / std::sqrt(2.0));
  }
  return 1.0;
}

}  // namespace

Tail parse_tail(const std::string& text) {
  if (text == "two-sided") return Tail::kTwoSided;
  if (text == "less") return Tail::kLess;
  if (text == "greater") return Tail::kGreater;
  throw std::invalid_argument("unknown tail '" + text + "' (expected two-sided, less or greater)");
}

const char* to_string(Tail tail) {
  switch (tail) {
    case Tail::kTwoSided: return "two-sided";
    case Tail::kLess: return "less";
    case Tail::kGreater: return "greater";
  }
  return "two-sided";
}

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mid;
    i = j;
  }
  return ranks;
}

RankSumResult rank_sum(std::span<const double> a, std::span<const double> b, Tail tail) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("rank_sum needs at least two values per sample");
  for (double v : a)
    if (std::isnan(v)) throw std::invalid_argument("rank_sum: NaN in first sample");
  for (double v : b)
    if (std::isnan(v)) throw std::invalid_argument("rank_sum: NaN in second sample");

  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = midranks(pooled);

  RankSumResult result;
  result.w = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(a.size()), 0.0);
  if (std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled.front(); })) {
    result.p = 1.0;
    result.exact = pooled.size() <= kExactLimit;
    return result;
  }
  if (pooled.size() <= kExactLimit) {
    result.exact = true;
    result.p = exact_p(ranks, a.size(), result.w, tail);
  } else {
    result.p = normal_p(pooled, a.size(), b.size(), result.w, tail);
  }
  return result;
}

}  // namespace sdp::stats

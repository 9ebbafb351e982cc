#include "sdp/batching.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace sdp::data {

std::vector<Batch> batch_by_tokens(std::span<const SemanticGraph> graphs, std::size_t budget, std::uint64_t seed) {
  if (budget == 0) throw std::invalid_argument("batch_by_tokens: token budget must be positive");
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (graphs[i].tokens.size() > budget) {
      throw std::invalid_argument("batch_by_tokens: sentence " + std::to_string(i) + " has " +
                                  std::to_string(graphs[i].tokens.size()) + " tokens, budget is " +
                                  std::to_string(budget));
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return graphs[a].tokens.size() < graphs[b].tokens.size(); });

  std::vector<Batch> batches;
  Batch current;
  for (std::size_t idx : order) {
    const std::size_t len = graphs[idx].tokens.size();
    if (!current.sentences.empty() && current.tokens + len > budget) {
      batches.push_back(std::move(current));
      current = Batch{};
    }
    current.sentences.push_back(idx);
    current.tokens += len;
  }
  if (!current.sentences.empty()) batches.push_back(std::move(current));
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

}  // namespace sdp::data

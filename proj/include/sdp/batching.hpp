#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdp/graph.hpp"

namespace sdp::data {

struct Batch {
  std::vector<std::size_t> sentences;  // indices into the corpus
  std::size_t tokens = 0;
};

// Shuffles with `seed`, orders by length so similar lengths share a batch,
// fills batches greedily up to `budget` tokens and shuffles the batch order.
// Every sentence lands in exactly one batch. Throws if a sentence alone
// exceeds the budget.
std::vector<Batch> batch_by_tokens(std::span<const SemanticGraph> graphs, std::size_t budget, std::uint64_t seed);

}  // namespace sdp::data

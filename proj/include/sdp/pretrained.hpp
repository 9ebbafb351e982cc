#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdp/autodiff.hpp"

namespace sdp::nn {

// Frozen pretrained vectors read from text: one token per line followed by
// d whitespace-separated floats. Lookups are case-folded to lowercase ASCII.
struct PretrainedEmbeddings {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, std::size_t> index;
  ad::Tensor table;  // V x d, requires_grad = false

  std::size_t dim() const { return table.dim(1); }
  std::optional<std::size_t> find(const std::string& word) const;
};

std::string fold_case(const std::string& word);

PretrainedEmbeddings read_pretrained(std::istream& in);
PretrainedEmbeddings load_pretrained(const std::filesystem::path& path);
PretrainedEmbeddings make_pretrained(std::vector<std::string> tokens, ad::Tensor table);

}  // namespace sdp::nn

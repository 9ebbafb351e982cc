#include "sdp/pretrained.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace sdp::nn {

std::string fold_case(const std::string& word) {
  std::string out = word;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<std::size_t> PretrainedEmbeddings::find(const std::string& word) const {
  auto it = index.find(fold_case(word));
  if (it == index.end()) return std::nullopt;
  return it->second;
}

PretrainedEmbeddings make_pretrained(std::vector<std::string> tokens, ad::Tensor table) {
  if (table.rank() != 2 || table.dim(0) != tokens.size()) {
    throw ad::DimensionError("pretrained table " + ad::shape_string(table.shape()) + " for " +
                             std::to_string(tokens.size()) + " tokens");
  }
  PretrainedEmbeddings p;
  p.tokens = std::move(tokens);
  for (std::size_t i = 0; i < p.tokens.size(); ++i) p.index.emplace(fold_case(p.tokens[i]), i);
  p.table = std::move(table);
  p.table.set_requires_grad(false);
  return p;
}

PretrainedEmbeddings read_pretrained(std::istream& in) {
  std::vector<std::string> tokens;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> row;
    double v;
    while (fields >> v) row.push_back(v);
    if (!fields.eof()) throw std::runtime_error("pretrained line " + std::to_string(line_no) + ": bad number");
    if (row.empty()) throw std::runtime_error("pretrained line " + std::to_string(line_no) + ": no vector");
    if (dim == 0) dim = row.size();
    if (row.size() != dim) {
      throw std::runtime_error("pretrained line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                               " values, got " + std::to_string(row.size()));
    }
    tokens.push_back(token);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (tokens.empty()) throw std::runtime_error("pretrained embeddings: no vectors");
  const std::size_t rows = tokens.size();
  return make_pretrained(std::move(tokens), ad::Tensor({rows, dim}, std::move(values)));
}

PretrainedEmbeddings load_pretrained(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_pretrained(in);
}

}  // namespace sdp::nn

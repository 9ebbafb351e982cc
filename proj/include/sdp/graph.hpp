#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sdp::data {

struct Token {
  int index = 0;  // 1-based
  std::string form;
  std::string lemma;
  std::string pos;
  std::string frame = "_";  // passed through untouched
  std::u32string characters;

  bool operator==(const Token&) const = default;
};

Token make_token(int index, std::string form, std::string lemma, std::string pos, std::string frame = "_");

struct Edge {
  int head = 0;
  int dependent = 0;
  std::string label;

  auto operator<=>(const Edge&) const = default;
};

// Tokens plus labeled directed edges. Token indices are 1-based; index 0 is
// reserved for the virtual root, which never appears as an edge endpoint
// here (tops are kept in their own set).
struct SemanticGraph {
  std::string id;
  std::vector<Token> tokens;
  std::map<std::pair<int, int>, std::string> edges;  // (head, dependent) -> label
  std::set<int> tops;

  int size() const { return static_cast<int>(tokens.size()); }

  // Throws std::invalid_argument on self-loops, duplicate pairs or indices
  // out of range.
  void add_edge(int head, int dependent, std::string label);
  void add_top(int index);

  std::vector<Edge> edge_list() const;
  // Same tokens, no edges or tops.
  SemanticGraph stripped() const;

  bool operator==(const SemanticGraph&) const = default;
};

// Structural problems (range, self-loops); empty when well formed.
std::vector<std::string> structural_problems(const SemanticGraph& graph);

// A directed cycle as a token index sequence, if one exists.
std::optional<std::vector<int>> find_cycle(const SemanticGraph& graph);
inline bool is_acyclic(const SemanticGraph& graph) { return !find_cycle(graph).has_value(); }

std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(char32_t code_point);
std::string encode_utf8(std::u32string_view text);

}  // namespace sdp::data

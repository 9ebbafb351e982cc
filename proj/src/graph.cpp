#include "sdp/graph.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace sdp::data {

Token make_token(int index, std::string form, std::string lemma, std::string pos, std::string frame) {
  if (index < 1) throw std::invalid_argument("token index must be >= 1");
  if (form.empty()) throw std::invalid_argument("token form must be non-empty");
  Token t;
  t.index = index;
  t.characters = decode_utf8(form);
  t.form = std::move(form);
  t.lemma = std::move(lemma);
  t.pos = std::move(pos);
  t.frame = std::move(frame);
  return t;
}

void SemanticGraph::add_edge(int head, int dependent, std::string label) {
  const int n = size();
  if (head < 1 || head > n || dependent < 1 || dependent > n) {
    throw std::invalid_argument("edge " + std::to_string(head) + "->" + std::to_string(dependent) +
                                " outside token range 1.." + std::to_string(n));
  }
  if (head == dependent) throw std::invalid_argument("self-loop on token " + std::to_string(head));
  auto [it, inserted] = edges.emplace(std::make_pair(head, dependent), std::move(label));
  if (!inserted) {
    throw std::invalid_argument("duplicate edge " + std::to_string(head) + "->" + std::to_string(dependent));
  }
}

void SemanticGraph::add_top(int index) {
  if (index < 1 || index > size()) throw std::invalid_argument("top " + std::to_string(index) + " out of range");
  tops.insert(index);
}

std::vector<Edge> SemanticGraph::edge_list() const {
  std::vector<Edge> out;
  out.reserve(edges.size());
  for (const auto& [key, label] : edges) out.push_back({key.first, key.second, label});
  return out;
}

SemanticGraph SemanticGraph::stripped() const {
  SemanticGraph g;
  g.id = id;
  g.tokens = tokens;
  return g;
}

std::vector<std::string> structural_problems(const SemanticGraph& graph) {
  std::vector<std::string> problems;
  const int n = graph.size();
  for (int i = 0; i < n; ++i) {
    if (graph.tokens[i].index != i + 1) problems.push_back("token " + std::to_string(i + 1) + " has index " +
                                                           std::to_string(graph.tokens[i].index));
  }
  for (const auto& [key, label] : graph.edges) {
    auto [h, d] = key;
    if (h < 1 || h > n || d < 1 || d > n) problems.push_back("edge " + std::to_string(h) + "->" + std::to_string(d) + " out of range");
    if (h == d) problems.push_back("self-loop on token " + std::to_string(h));
  }
  for (int t : graph.tops) {
    if (t < 1 || t > n) problems.push_back("top " + std::to_string(t) + " out of range");
  }
  return problems;
}

std::optional<std::vector<int>> find_cycle(const SemanticGraph& graph) {
  const int n = graph.size();
  std::vector<std::vector<int>> out(n + 1);
  for (const auto& [key, label] : graph.edges) {
    if (key.first >= 1 && key.first <= n && key.second >= 1 && key.second <= n) out[key.first].push_back(key.second);
  }
  enum : char { kWhite, kGrey, kBlack };
  std::vector<char> color(n + 1, kWhite);
  std::vector<int> stack;
  std::optional<std::vector<int>> cycle;
  std::function<bool(int)> visit = [&](int v) {
    color[v] = kGrey;
    stack.push_back(v);
    for (int w : out[v]) {
      if (color[w] == kGrey) {
        auto start = std::find(stack.begin(), stack.end(), w);
        cycle = std::vector<int>(start, stack.end());
        return true;
      }
      if (color[w] == kWhite && visit(w)) return true;
    }
    stack.pop_back();
    color[v] = kBlack;
    return false;
  };
  for (int v = 1; v <= n; ++v) {
    if (color[v] == kWhite && visit(v)) return cycle;
  }
  return std::nullopt;
}

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      extra = 2;
    } else if ((c & 0xF8) == 0xF0) {
      cp = c & 0x07;
      extra = 3;
    } else {
      cp = 0xFFFD;  // stray continuation or invalid lead byte
    }
    ++i;
    for (int k = 0; k < extra; ++k, ++i) {
      if (i >= text.size() || (static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
        cp = 0xFFFD;
        break;
      }
      cp = (cp << 6) | (static_cast<unsigned char>(text[i]) & 0x3F);
    }
    out.push_back(cp);
  }
  return out;
}

std::string encode_utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  for (char32_t cp : text) out += encode_utf8(cp);
  return out;
}

}  // namespace sdp::data

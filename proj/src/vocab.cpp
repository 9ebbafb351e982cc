#include "sdp/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace sdp::data {

SymbolMap::SymbolMap(std::vector<std::string> reserved, std::optional<std::size_t> unknown_index)
    : reserved_(reserved.size()), unknown_(unknown_index) {
  for (auto& s : reserved) add(s);
  if (unknown_ && *unknown_ >= reserved_) throw std::invalid_argument("unknown index must be reserved");
}

std::size_t SymbolMap::add(const std::string& symbol) {
  auto [it, inserted] = lookup_.emplace(symbol, symbols_.size());
  if (inserted) symbols_.push_back(symbol);
  return it->second;
}

std::optional<std::size_t> SymbolMap::find(const std::string& symbol) const {
  auto it = lookup_.find(symbol);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t SymbolMap::index(const std::string& symbol) const {
  if (auto i = find(symbol)) return *i;
  if (!unknown_) throw std::out_of_range("unknown symbol '" + symbol + "'");
  return *unknown_;
}

std::vector<std::size_t> Vocabulary::char_ids(const Token& t) const {
  std::vector<std::size_t> ids;
  ids.reserve(t.characters.size());
  for (char32_t c : t.characters) ids.push_back(chars.index(encode_utf8(c)));
  return ids;
}

namespace {

class Counter {
 public:
  void add(const std::string& s) {
    auto [it, inserted] = index_.emplace(s, entries_.size());
    if (inserted) entries_.push_back({s, 0});
    ++entries_[it->second].count;
  }

  // Symbols with count >= threshold, by descending count then first sight.
  std::vector<std::string> ranked(std::size_t threshold) const {
    std::vector<Entry> kept;
    for (const auto& e : entries_)
      if (e.count >= threshold) kept.push_back(e);
    std::stable_sort(kept.begin(), kept.end(), [](const Entry& a, const Entry& b) { return a.count > b.count; });
    std::vector<std::string> out;
    for (auto& e : kept) out.push_back(e.symbol);
    return out;
  }

 private:
  struct Entry {
    std::string symbol;
    std::size_t count;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

SymbolMap token_map() { return SymbolMap({kUnknownSymbol, kDropSymbol}, Vocabulary::kUnknown); }
SymbolMap char_map() { return SymbolMap({kUnknownSymbol, kDropSymbol, kBoundarySymbol}, Vocabulary::kUnknown); }
SymbolMap label_map() { return SymbolMap({kTopLabel}, std::nullopt); }

}  // namespace

Vocabulary build_vocab(std::span<const SemanticGraph> train, std::size_t threshold) {
  std::size_t tokens = 0;
  for (const auto& g : train) tokens += g.tokens.size();
  if (tokens == 0) throw std::invalid_argument("build_vocab: empty training corpus");

  Counter words, lemmas, tags, chars, labels;
  for (const auto& g : train) {
    for (const auto& t : g.tokens) {
      words.add(t.form);
      lemmas.add(t.lemma);
      tags.add(t.pos);
      for (char32_t c : t.characters) chars.add(encode_utf8(c));
    }
    for (const auto& [key, label] : g.edges) labels.add(label);
  }

  Vocabulary v;
  v.threshold = threshold;
  v.words = token_map();
  v.lemmas = token_map();
  v.pos = token_map();
  v.chars = char_map();
  v.labels = label_map();
  for (auto& s : words.ranked(threshold)) v.words.add(s);
  for (auto& s : lemmas.ranked(threshold)) v.lemmas.add(s);
  for (auto& s : tags.ranked(1)) v.pos.add(s);
  for (auto& s : chars.ranked(1)) v.chars.add(s);
  for (auto& s : labels.ranked(1)) v.labels.add(s);
  return v;
}

namespace {

constexpr const char* kVocabHeader = "#sdp-vocab 1";

void write_map(std::ostream& out, const char* kind, const SymbolMap& map) {
  for (std::size_t i = map.reserved(); i < map.size(); ++i) out << kind << '\t' << map.symbol(i) << '\n';
}

}  // namespace

void write_vocab(std::ostream& out, const Vocabulary& vocab) {
  out << kVocabHeader << '\n' << "threshold\t" << vocab.threshold << '\n';
  write_map(out, "word", vocab.words);
  write_map(out, "lemma", vocab.lemmas);
  write_map(out, "pos", vocab.pos);
  write_map(out, "char", vocab.chars);
  write_map(out, "label", vocab.labels);
}

Vocabulary read_vocab(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kVocabHeader) throw std::runtime_error("not a vocabulary file");
  Vocabulary v;
  v.words = token_map();
  v.lemmas = token_map();
  v.pos = token_map();
  v.chars = char_map();
  v.labels = label_map();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("vocabulary line " + std::to_string(line_no) + " lacks a tab");
    const std::string kind = line.substr(0, tab);
    const std::string symbol = line.substr(tab + 1);
    if (kind == "threshold") v.threshold = std::stoul(symbol);
    else if (kind == "word") v.words.add(symbol);
    else if (kind == "lemma") v.lemmas.add(symbol);
    else if (kind == "pos") v.pos.add(symbol);
    else if (kind == "char") v.chars.add(symbol);
    else if (kind == "label") v.labels.add(symbol);
    else throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": unknown kind '" + kind + "'");
  }
  return v;
}

void save_vocab(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_vocab(out, vocab);
}

Vocabulary load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_vocab(in);
}

}  // namespace sdp::data

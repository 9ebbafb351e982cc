#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdp/graph.hpp"

namespace sdp::data {

inline constexpr const char* kUnknownSymbol = "<UNK>";
inline constexpr const char* kDropSymbol = "<DROP>";
inline constexpr const char* kBoundarySymbol = "<BOUND>";
inline constexpr const char* kTopLabel = "<TOP>";

// Dense symbol <-> index map. Reserved symbols occupy the first indices.
class SymbolMap {
 public:
  SymbolMap() = default;
  explicit SymbolMap(std::vector<std::string> reserved, std::optional<std::size_t> unknown_index);

  // Appends `symbol` if new; returns its index.
  std::size_t add(const std::string& symbol);

  // Index of `symbol`, falling back to the unknown index. Throws
  // std::out_of_range for maps without an unknown entry.
  std::size_t index(const std::string& symbol) const;
  std::optional<std::size_t> find(const std::string& symbol) const;
  bool contains(const std::string& symbol) const { return lookup_.count(symbol) != 0; }

  const std::string& symbol(std::size_t index) const { return symbols_.at(index); }
  std::size_t size() const { return symbols_.size(); }
  std::size_t reserved() const { return reserved_; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  bool operator==(const SymbolMap& other) const {
    return symbols_ == other.symbols_ && reserved_ == other.reserved_ && unknown_ == other.unknown_;
  }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::size_t> lookup_;
  std::size_t reserved_ = 0;
  std::optional<std::size_t> unknown_;
};

// Indices 0 and 1 of the word, lemma, pos and char maps are <UNK> and
// <DROP>; the char map additionally reserves 2 for the boundary pad. The
// label map reserves 0 for the virtual-root top label and has no unknown.
struct Vocabulary {
  static constexpr std::size_t kUnknown = 0;
  static constexpr std::size_t kDrop = 1;
  static constexpr std::size_t kBoundary = 2;
  static constexpr std::size_t kTop = 0;

  SymbolMap words;
  SymbolMap lemmas;
  SymbolMap pos;
  SymbolMap chars;
  SymbolMap labels;
  std::size_t threshold = 7;

  std::size_t word_id(const Token& t) const { return words.index(t.form); }
  std::size_t lemma_id(const Token& t) const { return lemmas.index(t.lemma); }
  std::size_t pos_id(const Token& t) const { return pos.index(t.pos); }
  std::vector<std::size_t> char_ids(const Token& t) const;

  bool operator==(const Vocabulary&) const = default;
};

// Word and lemma maps keep symbols seen at least `threshold` times in the
// training corpus; pos, char and label maps keep everything. Index order is
// descending frequency, ties broken by first occurrence.
Vocabulary build_vocab(std::span<const SemanticGraph> train, std::size_t threshold = 7);

void write_vocab(std::ostream& out, const Vocabulary& vocab);
Vocabulary read_vocab(std::istream& in);
void save_vocab(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::filesystem::path& path);

}  // namespace sdp::data

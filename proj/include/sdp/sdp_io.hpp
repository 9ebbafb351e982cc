#pragma once

// Reader and writer for the tab-separated SemEval semantic dependency format:
//
//   #SDP 2015
//   #20001001
//   1  Mary   Mary   NNP  -  -  _  ARG1  ARG1
//   2  wants  want   VBZ  +  +  _  _     _
//   ...
//
// Columns are id, form, lemma, pos, top, pred, frame, then one argument
// column per `+` predicate in order. Frame-less rows (2014 layout) and
// bare id/form/lemma/pos rows are accepted on read. Comments are dropped
// except the last comment before a block, which is kept as the sentence id.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "sdp/graph.hpp"

namespace sdp::data {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::vector<SemanticGraph> read_sdp(std::istream& in);
std::vector<SemanticGraph> read_sdp_file(const std::filesystem::path& path);

// Predicates are exactly the tokens with at least one outgoing edge. An empty
// corpus writes nothing.
void write_sdp(std::ostream& out, std::span<const SemanticGraph> graphs);
void write_sdp_file(const std::filesystem::path& path, std::span<const SemanticGraph> graphs);

}  // namespace sdp::data

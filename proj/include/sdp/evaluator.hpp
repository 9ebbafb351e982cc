#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>

#include "sdp/graph.hpp"

namespace sdp::eval {

struct Counts {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;

  // 0/0 is reported as 0; F1 is 0 when precision + recall is 0.
  double precision() const;
  double recall() const;
  double f1() const;

  Counts& operator+=(const Counts& o);
  bool operator==(const Counts&) const = default;
};

struct EvalReport {
  Counts labeled;
  Counts unlabeled;
  Counts tops;
  std::size_t sentences = 0;
  std::size_t exact_labeled = 0;
  std::map<std::string, Counts> per_label;

  double exact_match() const;
};

class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Micro-averaged edge overlap. With include_tops, each top counts as an
// extra edge from the virtual root labeled "<TOP>".
EvalReport score(std::span<const data::SemanticGraph> gold, std::span<const data::SemanticGraph> predicted,
                 bool include_tops = true);

// Aligned table for people, followed by LP/LR/LF/UP/UR/UF/EM key=value lines.
void write_report(std::ostream& out, const EvalReport& report);
std::string format_metric(double value);

}  // namespace sdp::eval

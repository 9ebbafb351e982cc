#include "sdp/evaluator.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "sdp/vocab.hpp"

namespace sdp::eval {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

using LabeledEdge = std::tuple<int, int, std::string>;

std::set<LabeledEdge> labeled_edges(const data::SemanticGraph& g, bool include_tops) {
  std::set<LabeledEdge> out;
  for (const auto& [key, label] : g.edges) out.emplace(key.first, key.second, label);
  if (include_tops)
    for (int t : g.tops) out.emplace(0, t, data::kTopLabel);
  return out;
}

}  // namespace

double Counts::precision() const { return ratio(correct, predicted); }
double Counts::recall() const { return ratio(correct, gold); }
double Counts::f1() const {
  const double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

Counts& Counts::operator+=(const Counts& o) {
  gold += o.gold;
  predicted += o.predicted;
  correct += o.correct;
  return *this;
}

double EvalReport::exact_match() const { return ratio(exact_labeled, sentences); }

EvalReport score(std::span<const data::SemanticGraph> gold, std::span<const data::SemanticGraph> predicted,
                 bool include_tops) {
  if (gold.size() != predicted.size()) {
    throw AlignmentError("gold has " + std::to_string(gold.size()) + " sentences, prediction has " +
                         std::to_string(predicted.size()));
  }
  EvalReport report;
  report.sentences = gold.size();
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].tokens.size() != predicted[s].tokens.size()) {
      throw AlignmentError("sentence " + std::to_string(s) + ": gold has " + std::to_string(gold[s].tokens.size()) +
                           " tokens, prediction has " + std::to_string(predicted[s].tokens.size()));
    }
    const auto g = labeled_edges(gold[s], include_tops);
    const auto p = labeled_edges(predicted[s], include_tops);

    std::set<std::pair<int, int>> gu, pu;
    for (const auto& [h, d, l] : g) gu.emplace(h, d);
    for (const auto& [h, d, l] : p) pu.emplace(h, d);

    report.labeled.gold += g.size();
    report.labeled.predicted += p.size();
    report.unlabeled.gold += gu.size();
    report.unlabeled.predicted += pu.size();
    for (const auto& e : p) {
      const bool hit = g.count(e) != 0;
      if (hit) ++report.labeled.correct;
      ++report.per_label[std::get<2>(e)].predicted;
      if (hit) ++report.per_label[std::get<2>(e)].correct;
    }
    for (const auto& e : g) ++report.per_label[std::get<2>(e)].gold;
    for (const auto& e : pu) report.unlabeled.correct += gu.count(e);
    if (g == p) ++report.exact_labeled;

    report.tops.gold += gold[s].tops.size();
    report.tops.predicted += predicted[s].tops.size();
    for (int t : predicted[s].tops) report.tops.correct += gold[s].tops.count(t);
  }
  return report;
}

std::string format_metric(double value) {
  std::ostringstream out;
  if (value == std::floor(value)) out << std::fixed << std::setprecision(1) << value;
  else out << std::setprecision(6) << value;
  return out.str();
}

void write_report(std::ostream& out, const EvalReport& r) {
  auto row = [&](const char* name, const Counts& c) {
    out << std::left << std::setw(12) << name << std::right << std::setw(8) << c.gold << std::setw(8) << c.predicted
        << std::setw(8) << c.correct << std::fixed << std::setprecision(2) << std::setw(9) << 100.0 * c.precision()
        << std::setw(9) << 100.0 * c.recall() << std::setw(9) << 100.0 * c.f1() << '\n';
    out.unsetf(std::ios::fixed);
  };
  out << std::left << std::setw(12) << "" << std::right << std::setw(8) << "gold" << std::setw(8) << "pred"
      << std::setw(8) << "correct" << std::setw(9) << "P" << std::setw(9) << "R" << std::setw(9) << "F1" << '\n';
  row("labeled", r.labeled);
  row("unlabeled", r.unlabeled);
  row("tops", r.tops);
  for (const auto& [label, counts] : r.per_label) row(("  " + label).c_str(), counts);
  out << "sentences " << r.sentences << ", exact match " << std::fixed << std::setprecision(2)
      << 100.0 * r.exact_match() << "%\n";
  out.unsetf(std::ios::fixed);

  out << "LP=" << format_metric(r.labeled.precision()) << '\n'
      << "LR=" << format_metric(r.labeled.recall()) << '\n'
      << "LF=" << format_metric(r.labeled.f1()) << '\n'
      << "UP=" << format_metric(r.unlabeled.precision()) << '\n'
      << "UR=" << format_metric(r.unlabeled.recall()) << '\n'
      << "UF=" << format_metric(r.unlabeled.f1()) << '\n'
      << "EM=" << format_metric(r.exact_match()) << '\n';
}

}  // namespace sdp::eval

#include "sdp/sdp_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace sdp::data {

namespace {

constexpr const char* kHeader = "#SDP 2015";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

struct Row {
  std::size_t line;
  std::vector<std::string> cols;
};

SemanticGraph build_graph(const std::vector<Row>& rows, std::string id) {
  SemanticGraph g;
  g.id = std::move(id);
  const std::size_t width = rows.front().cols.size();
  for (const auto& r : rows) {
    if (r.cols.size() != width) {
      throw ParseError(r.line, "ragged row: " + std::to_string(r.cols.size()) + " columns, block uses " +
                                   std::to_string(width));
    }
  }
  if (width < 4 || width == 5) throw ParseError(rows.front().line, "expected at least id, form, lemma, pos columns");

  std::vector<int> predicates;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& c = rows[i].cols;
    const std::string expected = std::to_string(i + 1);
    if (c[0] != expected) {
      throw ParseError(rows[i].line, "non-contiguous token id '" + c[0] + "', expected " + expected);
    }
    if (c[1].empty()) throw ParseError(rows[i].line, "empty form");
    if (width >= 6) {
      if (c[4] != "+" && c[4] != "-") throw ParseError(rows[i].line, "top column must be + or -, got '" + c[4] + "'");
      if (c[5] != "+" && c[5] != "-") throw ParseError(rows[i].line, "pred column must be + or -, got '" + c[5] + "'");
      if (c[5] == "+") predicates.push_back(static_cast<int>(i + 1));
    }
  }

  std::size_t first_arg = width;
  bool has_frame = false;
  if (width >= 6) {
    const std::size_t rest = width - 6;
    if (rest == predicates.size()) {
      first_arg = 6;
    } else if (rest == predicates.size() + 1) {
      first_arg = 7;
      has_frame = true;
    } else {
      throw ParseError(rows.front().line, "ragged block: " + std::to_string(rest) + " columns after pred for " +
                                              std::to_string(predicates.size()) + " predicates");
    }
  }

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& c = rows[i].cols;
    g.tokens.push_back(make_token(static_cast<int>(i + 1), c[1], c[2], c[3], has_frame ? c[6] : "_"));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& c = rows[i].cols;
    if (width >= 6 && c[4] == "+") g.add_top(static_cast<int>(i + 1));
    for (std::size_t k = 0; k < predicates.size(); ++k) {
      const std::string& cell = c[first_arg + k];
      if (cell == "_") continue;
      try {
        g.add_edge(predicates[k], static_cast<int>(i + 1), cell);
      } catch (const std::invalid_argument& e) {
        throw ParseError(rows[i].line, e.what());
      }
    }
  }
  return g;
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

std::vector<SemanticGraph> read_sdp(std::istream& in) {
  std::vector<SemanticGraph> graphs;
  std::vector<Row> rows;
  std::string pending_id;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&]() {
    if (rows.empty()) return;
    graphs.push_back(build_graph(rows, pending_id));
    rows.clear();
    pending_id.clear();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') {
      if (!rows.empty()) throw ParseError(line_no, "comment inside a sentence block");
      if (line != kHeader) pending_id = line.substr(1);
      continue;
    }
    rows.push_back({line_no, split_tabs(line)});
  }
  flush();
  return graphs;
}

std::vector<SemanticGraph> read_sdp_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_sdp(in);
}

void write_sdp(std::ostream& out, std::span<const SemanticGraph> graphs) {
  if (graphs.empty()) return;
  out << kHeader << '\n';
  for (const auto& g : graphs) {
    if (!g.id.empty()) out << '#' << g.id << '\n';
    const int n = g.size();
    std::vector<int> pred_column(n + 1, -1);
    std::vector<int> predicates;
    for (const auto& [key, label] : g.edges) {
      if (pred_column[key.first] < 0) {
        pred_column[key.first] = 0;
      }
    }
    for (int i = 1; i <= n; ++i) {
      if (pred_column[i] == 0) {
        pred_column[i] = static_cast<int>(predicates.size());
        predicates.push_back(i);
      }
    }
    for (int i = 1; i <= n; ++i) {
      const Token& t = g.tokens[i - 1];
      out << i << '\t' << t.form << '\t' << t.lemma << '\t' << t.pos << '\t' << (g.tops.count(i) ? '+' : '-') << '\t'
          << (pred_column[i] >= 0 ? '+' : '-') << '\t' << t.frame;
      for (int head : predicates) {
        auto it = g.edges.find({head, i});
        out << '\t' << (it == g.edges.end() ? std::string("_") : it->second);
      }
      out << '\n';
    }
    out << '\n';
  }
}

void write_sdp_file(const std::filesystem::path& path, std::span<const SemanticGraph> graphs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_sdp(out, graphs);
}

}  // namespace sdp::data

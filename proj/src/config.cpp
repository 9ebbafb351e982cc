#include "sdp/config.hpp"

#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <variant>

namespace sdp::model {

namespace {

using Field = std::variant<std::size_t ModelConfig::*, double ModelConfig::*, bool ModelConfig::*,
                           ClassifierKind ModelConfig::*, Activation ModelConfig::*>;

struct Entry {
  const char* key;
  Field field;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"word_dim", &ModelConfig::word_dim},
      {"glove_linear_dim", &ModelConfig::glove_linear_dim},
      {"pos_dim", &ModelConfig::pos_dim},
      {"lemma_dim", &ModelConfig::lemma_dim},
      {"char_dim", &ModelConfig::char_dim},
      {"char_hidden", &ModelConfig::char_hidden},
      {"char_out", &ModelConfig::char_out},
      {"lstm_hidden", &ModelConfig::lstm_hidden},
      {"lstm_layers", &ModelConfig::lstm_layers},
      {"edge_hidden_dim", &ModelConfig::edge_hidden_dim},
      {"label_hidden_dim", &ModelConfig::label_hidden_dim},
      {"word_drop", &ModelConfig::word_drop},
      {"pos_drop", &ModelConfig::pos_drop},
      {"lemma_drop", &ModelConfig::lemma_drop},
      {"char_ff_drop", &ModelConfig::char_ff_drop},
      {"char_recur_drop", &ModelConfig::char_recur_drop},
      {"char_linear_drop", &ModelConfig::char_linear_drop},
      {"lstm_ff_drop", &ModelConfig::lstm_ff_drop},
      {"lstm_recur_drop", &ModelConfig::lstm_recur_drop},
      {"edge_drop", &ModelConfig::edge_drop},
      {"label_drop", &ModelConfig::label_drop},
      {"interpolation", &ModelConfig::interpolation},
      {"learning_rate", &ModelConfig::learning_rate},
      {"beta1", &ModelConfig::beta1},
      {"beta2", &ModelConfig::beta2},
      {"epsilon", &ModelConfig::epsilon},
      {"l2", &ModelConfig::l2},
      {"use_char", &ModelConfig::use_char},
      {"use_lemma", &ModelConfig::use_lemma},
      {"factorized", &ModelConfig::factorized},
      {"edge_hidden", &ModelConfig::edge_hidden},
      {"label_hidden", &ModelConfig::label_hidden},
      {"classifier", &ModelConfig::classifier},
      {"edge_diagonal", &ModelConfig::edge_diagonal},
      {"label_diagonal", &ModelConfig::label_diagonal},
      {"nonlinearity", &ModelConfig::nonlinearity},
      {"batch_tokens", &ModelConfig::batch_tokens},
      {"max_steps", &ModelConfig::max_steps},
      {"patience", &ModelConfig::patience},
      {"eval_every", &ModelConfig::eval_every},
  };
  return table;
}

const Entry* find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (key == e.key) return &e;
  return nullptr;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("invalid value '" + value + "' for " + key);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  if (!(in >> out)) bad_value(key, value);
  in >> std::ws;
  if (!in.eof()) bad_value(key, value);
  if constexpr (std::is_unsigned_v<T>) {
    if (value.find('-') != std::string::npos) bad_value(key, value);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value);
}

}  // namespace

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

const std::vector<std::string>& ModelConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& e : entries()) out.emplace_back(e.key);
    return out;
  }();
  return names;
}

void ModelConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "hidden_layers") {
    edge_hidden = label_hidden = parse_bool(key, value);
    return;
  }
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key '" + key + "'");
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, std::size_t>) {
          this->*member = parse_number<std::size_t>(key, value);
        } else if constexpr (std::is_same_v<T, double>) {
          this->*member = parse_number<double>(key, value);
        } else if constexpr (std::is_same_v<T, bool>) {
          this->*member = parse_bool(key, value);
        } else if constexpr (std::is_same_v<T, ClassifierKind>) {
          if (value == "biaffine") this->*member = ClassifierKind::kBiaffine;
          else if (value == "bilinear") this->*member = ClassifierKind::kBilinear;
          else bad_value(key, value);
        } else {
          if (value == "identity") this->*member = Activation::kIdentity;
          else if (value == "relu") this->*member = Activation::kRelu;
          else bad_value(key, value);
        }
      },
      e->field);
}

std::string ModelConfig::get(const std::string& key) const {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key '" + key + "'");
  std::ostringstream out;
  std::visit(
      [&](auto member) {
        using T = std::remove_cvref_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, std::size_t>) {
          out << this->*member;
        } else if constexpr (std::is_same_v<T, double>) {
          out << std::setprecision(std::numeric_limits<double>::max_digits10) << this->*member;
        } else if constexpr (std::is_same_v<T, bool>) {
          out << (this->*member ? "true" : "false");
        } else if constexpr (std::is_same_v<T, ClassifierKind>) {
          out << (this->*member == ClassifierKind::kBiaffine ? "biaffine" : "bilinear");
        } else {
          out << (this->*member == Activation::kIdentity ? "identity" : "relu");
        }
      },
      e->field);
  return out.str();
}

void ModelConfig::validate() const {
  if (!(interpolation > 0.0 && interpolation < 1.0)) {
    throw ConfigError("interpolation must lie in (0,1), got " + get("interpolation"));
  }
  for (const char* key : {"word_drop", "pos_drop", "lemma_drop", "char_ff_drop", "char_recur_drop", "char_linear_drop",
                          "lstm_ff_drop", "lstm_recur_drop", "edge_drop", "label_drop", "beta1", "beta2"}) {
    const double v = parse_number<double>(key, get(key));
    if (!(v >= 0.0 && v < 1.0)) throw ConfigError(std::string(key) + " must lie in [0,1), got " + get(key));
  }
  for (const char* key : {"word_dim", "glove_linear_dim", "pos_dim", "lemma_dim", "char_dim", "char_hidden", "char_out",
                          "lstm_hidden", "lstm_layers", "edge_hidden_dim", "label_hidden_dim", "batch_tokens",
                          "eval_every"}) {
    if (get(key) == "0") throw ConfigError(std::string(key) + " must be positive");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(epsilon >= 0.0) || !(l2 >= 0.0)) throw ConfigError("epsilon and l2 must be non-negative");
}

void apply_config_text(ModelConfig& config, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    try {
      config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void load_config(ModelConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  apply_config_text(config, in);
}

void write_config(std::ostream& out, const ModelConfig& config) {
  for (const auto& key : ModelConfig::keys()) out << key << '=' << config.get(key) << '\n';
}

void save_config(const std::filesystem::path& path, const ModelConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  write_config(out, config);
}

}  // namespace sdp::model

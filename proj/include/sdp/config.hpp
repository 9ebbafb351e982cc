#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdp::model {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ClassifierKind { kBiaffine, kBilinear };
enum class Activation { kIdentity, kRelu };

// Every hyperparameter of the parser and its training loop. Defaults are
// the full-size published configuration.
struct ModelConfig {
  // Embedding and hidden sizes.
  std::size_t word_dim = 100;
  std::size_t glove_linear_dim = 125;
  std::size_t pos_dim = 100;
  std::size_t lemma_dim = 100;
  std::size_t char_dim = 100;
  std::size_t char_hidden = 400;
  std::size_t char_out = 100;
  std::size_t lstm_hidden = 600;
  std::size_t lstm_layers = 3;
  std::size_t edge_hidden_dim = 600;
  std::size_t label_hidden_dim = 600;

  // Drop probabilities.
  double word_drop = 0.20;  // shared by the word, pretrained and char channels
  double pos_drop = 0.20;
  double lemma_drop = 0.20;
  double char_ff_drop = 0.33;
  double char_recur_drop = 0.33;
  double char_linear_drop = 0.33;
  double lstm_ff_drop = 0.45;
  double lstm_recur_drop = 0.25;
  double edge_drop = 0.25;
  double label_drop = 0.33;

  // Loss and optimizer.
  double interpolation = 0.025;
  double learning_rate = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.95;
  double epsilon = 1e-12;
  double l2 = 3e-9;

  // Architecture switches.
  bool use_char = false;
  bool use_lemma = false;
  bool factorized = true;
  bool edge_hidden = true;
  bool label_hidden = true;
  ClassifierKind classifier = ClassifierKind::kBiaffine;
  bool edge_diagonal = false;
  bool label_diagonal = true;
  Activation nonlinearity = Activation::kIdentity;

  // Training loop.
  std::size_t batch_tokens = 3000;
  std::size_t max_steps = 75000;
  std::size_t patience = 10000;
  std::size_t eval_every = 100;

  // Sets one field from its textual key and value; throws ConfigError on an
  // unknown key or malformed value. `hidden_layers` sets both edge_hidden
  // and label_hidden.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  // Range checks (interpolation in (0,1), rates in [0,1), positive sizes).
  void validate() const;

  static const std::vector<std::string>& keys();

  bool operator==(const ModelConfig&) const = default;
};

// Flat `key = value` lines; `#` starts a comment.
void apply_config_text(ModelConfig& config, std::istream& in);
void load_config(ModelConfig& config, const std::filesystem::path& path);
void write_config(std::ostream& out, const ModelConfig& config);
void save_config(const std::filesystem::path& path, const ModelConfig& config);

std::string trim(const std::string& s);

}  // namespace sdp::model

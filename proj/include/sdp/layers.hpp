#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sdp/autodiff.hpp"
#include "sdp/checkpoint.hpp"

namespace sdp::nn {

using ad::NamedTensor;
using ad::Tape;
using ad::Tensor;
using Rng = std::mt19937_64;

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// Independent Bernoulli(rate) decisions.
std::vector<bool> bernoulli_mask(std::size_t n, double rate, Rng& rng);
// Inverted-dropout multiplier of `shape`: 0 with probability `rate`, else 1/(1-rate).
Tensor dropout_mask(ad::Shape shape, double rate, Rng& rng);
// Per-unit inverted dropout; identity when rng is null or rate is 0.
Tensor dropout(Tape& tape, const Tensor& x, double rate, Rng* rng);

struct EmbeddingTable {
  Tensor table;  // V x d
  std::size_t drop_row = 1;
  std::size_t unk_row = 0;
  bool frozen = false;

  static EmbeddingTable random(std::size_t rows, std::size_t dim, Rng& rng);
  std::size_t rows() const { return table.dim(0); }
  std::size_t dim() const { return table.dim(1); }
};

// Row i is the <DROP> row where drop_mask[i], else table[ids[i]].
Tensor embed(Tape& tape, const EmbeddingTable& table, std::span<const std::size_t> ids,
             const std::vector<bool>& drop_mask);

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  static Linear random(std::size_t in, std::size_t out, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

Tensor linear(Tape& tape, const Tensor& x, const Linear& layer);

enum class Nonlinearity { kIdentity, kRelu };

// Single-layer feedforward projection: nonlinearity(x W + b).
Tensor fnn_head(Tape& tape, const Tensor& x, const Linear& layer, Nonlinearity nonlinearity);

// Gate blocks are laid out [input | forget | output | cell] along columns.
struct LstmParams {
  Tensor wx;  // in x 4h
  Tensor wh;  // h x 4h
  Tensor b;   // 1 x 4h
  bool reverse = false;

  static LstmParams random(std::size_t in, std::size_t hidden, bool reverse, Rng& rng);
  std::size_t input_size() const { return wx.dim(0); }
  std::size_t hidden_size() const { return wh.dim(0); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct LstmDropout {
  double feedforward = 0.0;
  double recurrent = 0.0;
  Rng* rng = nullptr;  // null: inference, no dropout
};

// Masks actually applied, for inspection in tests.
struct DropoutTrace {
  std::vector<double> feedforward;
  std::vector<std::vector<double>> recurrent;  // one entry per timestep
};

// Runs one LSTM over the rows of `x` (in reverse order when params.reverse)
// and returns the hidden states aligned with the input rows. Dropout masks
// are sampled once per call and reused at every timestep.
Tensor lstm(Tape& tape, const Tensor& x, const LstmParams& params, const LstmDropout& dropout,
            DropoutTrace* trace = nullptr);

struct BiLstmLayer {
  LstmParams forward;
  LstmParams backward;
};

std::vector<BiLstmLayer> make_bilstm(std::size_t input, std::size_t hidden, std::size_t layers, Rng& rng);
void collect(const std::vector<BiLstmLayer>& layers, const std::string& prefix, std::vector<NamedTensor>& out);

// Stacked bidirectional LSTM; each layer reads the concatenated outputs of
// the previous one. Returns n x 2h.
Tensor bilstm(Tape& tape, const Tensor& x, std::span<const BiLstmLayer> layers, const LstmDropout& dropout);

struct CharEncoder {
  EmbeddingTable chars;
  LstmParams lstm;
  Linear output;

  static CharEncoder random(std::size_t alphabet, std::size_t char_dim, std::size_t hidden, std::size_t out_dim,
                            Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct CharDropout {
  double feedforward = 0.0;
  double recurrent = 0.0;
  double output = 0.0;
  Rng* rng = nullptr;
};

// Number of trigram windows for a word of `length` characters.
inline std::size_t char_window_count(std::size_t length) { return length < 3 ? 1 : length - 2; }

// Per word: embed characters, concatenate each window of three consecutive
// embeddings (words shorter than three are right-padded with `boundary_id`),
// run the LSTM over the windows and project its final state. Returns n x out.
Tensor char_encode(Tape& tape, std::span<const std::vector<std::size_t>> words, const CharEncoder& encoder,
                   std::size_t boundary_id, const CharDropout& dropout);

struct BiaffineParams {
  Tensor u;  // d x c x d, or c x d when diagonal
  Tensor w;  // c x 2d; absent for a bilinear classifier
  Tensor b;  // c; absent for a bilinear classifier
  std::size_t dim = 0;
  std::size_t classes = 0;
  bool diagonal = false;
  bool include_affine = true;

  static BiaffineParams zeros(std::size_t dim, std::size_t classes, bool diagonal, bool include_affine);
  static BiaffineParams random(std::size_t dim, std::size_t classes, bool diagonal, bool include_affine, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// score[i][j][k] = dep_i' U_k head_j + W_k (dep_i ++ head_j) + b_k, shape n x m x c.
// The affine part is skipped when params.include_affine is false.
Tensor biaffine(Tape& tape, const Tensor& dep, const Tensor& head, const BiaffineParams& params);
// Bilinear term only, regardless of params.include_affine.
Tensor bilinear(Tape& tape, const Tensor& dep, const Tensor& head, const BiaffineParams& params);

}  // namespace sdp::nn

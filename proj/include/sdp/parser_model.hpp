#pragma once

// Factorized graph parser: embeddings -> BiLSTM -> head/dependent
// projections -> biaffine edge scorer and biaffine labeler.
//
// Sentences are scored with a virtual root at position 0, so an n-token
// sentence yields (n+1) x (n+1) edge scores indexed [head][dependent]. Root
// edges carry the reserved top label (label index 0) and decode into the
// graph's top set.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdp/autodiff.hpp"
#include "sdp/config.hpp"
#include "sdp/graph.hpp"
#include "sdp/layers.hpp"
#include "sdp/pretrained.hpp"
#include "sdp/vocab.hpp"

namespace sdp::model {

using ad::NamedTensor;
using ad::Tape;
using ad::Tensor;
using nn::Rng;

struct ScoreSet {
  Tensor edge_scores;   // (n+1) x (n+1); absent in the unfactorized variant
  Tensor label_scores;  // (n+1) x (n+1) x classes
  bool factorized = true;
  // Unfactorized variant only: index of the "no edge" class (last class).
  std::size_t null_label = 0;

  std::size_t length() const { return label_scores.dim(0) - 1; }
  std::size_t classes() const { return label_scores.dim(2); }
};

struct DecodedEdge {
  int head = 0;  // 0 = virtual root
  int dependent = 0;
  std::size_t label = 0;

  auto operator<=>(const DecodedEdge&) const = default;
};

// Factorized: keeps cells with edge score >= 0 (dependent != root, head !=
// dependent). Root-headed edges take the top label; other edges take the
// argmax over the non-top labels, ties to the lowest index.
// Unfactorized: argmax per cell over {allowed labels, null}; kept unless null.
std::vector<DecodedEdge> decode_edges(const ScoreSet& scores);

// Decoded edges as a graph over `sentence`'s tokens.
data::SemanticGraph decode(const ScoreSet& scores, const data::SemanticGraph& sentence, const data::SymbolMap& labels);

// Per-cell training targets for one sentence.
struct GoldTargets {
  Tensor edge_gold;  // (n+1) x (n+1), 1 at gold edges (root edges for tops)
  Tensor edge_mask;  // 0 in the dependent = root column
  std::vector<std::size_t> label_gold;  // flattened (n+1)^2 cells
  std::vector<bool> label_mask;         // gold edges only (factorized); all non-root-dependent cells otherwise
};

GoldTargets make_targets(const data::SemanticGraph& gold, const data::SymbolMap& labels, bool factorized,
                         std::size_t null_label);

struct LossValue {
  Tensor total;
  double edge = 0.0;
  double label = 0.0;
};

// lambda * label loss + (1 - lambda) * edge loss, each a mean over its cells
// across the whole batch. The label loss only sees gold-edge cells. The
// unfactorized variant returns its single labeler loss.
LossValue batch_loss(Tape& tape, std::span<const ScoreSet> scores, std::span<const GoldTargets> targets,
                     double lambda);
LossValue loss(Tape& tape, const ScoreSet& scores, const GoldTargets& targets, double lambda);

class ParserModel {
 public:
  // `pretrained`, when given, adds the frozen pretrained channel.
  ParserModel(ModelConfig config, data::Vocabulary vocab, std::optional<nn::PretrainedEmbeddings> pretrained,
              std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const data::Vocabulary& vocab() const { return vocab_; }
  const std::optional<nn::PretrainedEmbeddings>& pretrained() const { return pretrained_; }

  std::size_t input_dim() const;
  // Classes scored by the labeler (labels, plus null when unfactorized).
  std::size_t label_classes() const;

  // A null rng means inference: no dropout of any kind.
  Tensor embed_sequence(Tape& tape, const data::SemanticGraph& sentence, Rng* rng) const;
  Tensor encode(Tape& tape, const Tensor& x, Rng* rng) const;
  ScoreSet score(Tape& tape, const Tensor& states, Rng* rng) const;
  ScoreSet forward(Tape& tape, const data::SemanticGraph& sentence, Rng* rng) const;

  GoldTargets targets(const data::SemanticGraph& gold) const;
  data::SemanticGraph parse(const data::SemanticGraph& sentence) const;

  // Trainable tensors in a fixed order.
  std::vector<NamedTensor> parameters() const;
  // Trainable tensors plus the frozen pretrained table.
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& tensors);

  // Direct access for tests and gradient checks.
  nn::BiaffineParams& edge_scorer() { return edge_biaffine_; }
  nn::BiaffineParams& label_scorer() { return label_biaffine_; }

 private:
  ModelConfig config_;
  data::Vocabulary vocab_;
  std::optional<nn::PretrainedEmbeddings> pretrained_;

  nn::EmbeddingTable word_embed_;
  nn::EmbeddingTable pos_embed_;
  nn::EmbeddingTable lemma_embed_;
  Tensor pretrained_unk_;
  nn::Linear pretrained_linear_;
  Tensor pretrained_drop_;
  nn::CharEncoder char_encoder_;
  Tensor char_drop_;
  Tensor root_embed_;
  std::vector<nn::BiLstmLayer> bilstm_;
  nn::Linear edge_head_, edge_dep_, label_head_, label_dep_;
  nn::BiaffineParams edge_biaffine_;
  nn::BiaffineParams label_biaffine_;
};

}  // namespace sdp::model

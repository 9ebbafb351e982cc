#include "sdp/parser_model.hpp"

#include <algorithm>
#include <stdexcept>

namespace sdp::model {

using data::SemanticGraph;
using data::Vocabulary;

namespace {

std::size_t best_label(const double* row, std::size_t begin, std::size_t end, std::optional<std::size_t> extra) {
  std::size_t best = begin < end ? begin : *extra;
  for (std::size_t k = begin; k < end; ++k)
    if (row[k] > row[best]) best = k;
  if (extra && row[*extra] > row[best]) best = *extra;
  return best;
}

}  // namespace

std::vector<DecodedEdge> decode_edges(const ScoreSet& scores) {
  const std::size_t n1 = scores.label_scores.dim(0);
  const std::size_t c = scores.classes();
  auto lv = scores.label_scores.values();
  std::vector<DecodedEdge> edges;
  if (scores.factorized) {
    auto ev = scores.edge_scores.values();
    // Root edges carry the top label; token edges choose among the rest.
    const std::size_t first = c > 1 ? 1 : 0;
    for (std::size_t h = 0; h < n1; ++h)
      for (std::size_t d = 1; d < n1; ++d) {
        if (h == d || ev[h * n1 + d] < 0.0) continue;
        const std::size_t label = h == 0 ? Vocabulary::kTop : best_label(lv.data() + (h * n1 + d) * c, first, c, {});
        edges.push_back({static_cast<int>(h), static_cast<int>(d), label});
      }
  } else {
    const std::size_t null = scores.null_label;
    for (std::size_t h = 0; h < n1; ++h)
      for (std::size_t d = 1; d < n1; ++d) {
        if (h == d) continue;
        const double* row = lv.data() + (h * n1 + d) * c;
        const std::size_t label = h == 0 ? best_label(row, Vocabulary::kTop, Vocabulary::kTop + 1, null)
                                         : best_label(row, 1, null, null);
        if (label != null) edges.push_back({static_cast<int>(h), static_cast<int>(d), label});
      }
  }
  return edges;
}

SemanticGraph decode(const ScoreSet& scores, const SemanticGraph& sentence, const data::SymbolMap& labels) {
  if (scores.length() != sentence.tokens.size()) {
    throw ad::DimensionError("decode: scores for " + std::to_string(scores.length()) + " tokens, sentence has " +
                             std::to_string(sentence.tokens.size()));
  }
  SemanticGraph g = sentence.stripped();
  for (const auto& e : decode_edges(scores)) {
    if (e.head == 0) g.add_top(e.dependent);
    else g.add_edge(e.head, e.dependent, labels.symbol(e.label));
  }
  return g;
}

GoldTargets make_targets(const SemanticGraph& gold, const data::SymbolMap& labels, bool factorized,
                         std::size_t null_label) {
  const std::size_t n1 = gold.tokens.size() + 1;
  std::vector<double> edge_gold(n1 * n1, 0.0), edge_mask(n1 * n1, 1.0);
  for (std::size_t h = 0; h < n1; ++h) edge_mask[h * n1] = 0.0;
  GoldTargets t;
  t.label_gold.assign(n1 * n1, factorized ? 0 : null_label);
  t.label_mask.assign(n1 * n1, false);
  if (!factorized) {
    for (std::size_t h = 0; h < n1; ++h)
      for (std::size_t d = 1; d < n1; ++d) t.label_mask[h * n1 + d] = true;
  }
  auto mark = [&](std::size_t h, std::size_t d, std::size_t label) {
    edge_gold[h * n1 + d] = 1.0;
    t.label_gold[h * n1 + d] = label;
    t.label_mask[h * n1 + d] = true;
  };
  for (int top : gold.tops) mark(0, static_cast<std::size_t>(top), Vocabulary::kTop);
  for (const auto& [key, label] : gold.edges) {
    auto idx = labels.find(label);
    if (!idx) throw std::invalid_argument("label '" + label + "' is not in the label vocabulary");
    mark(static_cast<std::size_t>(key.first), static_cast<std::size_t>(key.second), *idx);
  }
  t.edge_gold = Tensor({n1, n1}, std::move(edge_gold));
  t.edge_mask = Tensor({n1, n1}, std::move(edge_mask));
  return t;
}

LossValue batch_loss(Tape& tape, std::span<const ScoreSet> scores, std::span<const GoldTargets> targets,
                     double lambda) {
  if (scores.size() != targets.size() || scores.empty()) {
    throw std::invalid_argument("batch_loss: " + std::to_string(scores.size()) + " score sets for " +
                                std::to_string(targets.size()) + " targets");
  }
  const bool factorized = scores.front().factorized;
  if (factorized && !(lambda > 0.0 && lambda < 1.0)) {
    throw std::invalid_argument("interpolation lambda must lie in (0,1), got " + std::to_string(lambda));
  }

  // Weighted sum of per-sentence means == mean over all cells in the batch.
  auto pooled = [&](auto&& per_sentence, auto&& cell_count) {
    double total_cells = 0;
    for (std::size_t s = 0; s < scores.size(); ++s) total_cells += cell_count(s);
    Tensor acc;
    double value = 0.0;
    if (total_cells == 0) return std::make_pair(acc, value);
    for (std::size_t s = 0; s < scores.size(); ++s) {
      const double cells = cell_count(s);
      if (cells == 0) continue;
      Tensor term = ad::scale(tape, per_sentence(s), cells / total_cells);
      acc = acc ? ad::add(tape, acc, term) : term;
    }
    value = acc.item();
    return std::make_pair(acc, value);
  };

  auto label_term = [&](std::size_t s) {
    const Tensor& ls = scores[s].label_scores;
    const std::size_t n1 = ls.dim(0);
    const Tensor flat = ad::reshape(tape, ls, {n1 * n1, ls.dim(2)});
    return ad::softmax_xent(tape, flat, targets[s].label_gold, targets[s].label_mask);
  };
  auto label_cells = [&](std::size_t s) {
    return static_cast<double>(std::count(targets[s].label_mask.begin(), targets[s].label_mask.end(), true));
  };
  auto [label_loss, label_value] = pooled(label_term, label_cells);

  LossValue out;
  out.label = label_value;
  if (!factorized) {
    out.total = label_loss ? label_loss : Tensor::scalar(0.0);
    return out;
  }

  auto edge_term = [&](std::size_t s) {
    return ad::sigmoid_xent(tape, scores[s].edge_scores, targets[s].edge_gold, targets[s].edge_mask);
  };
  auto edge_cells = [&](std::size_t s) {
    double c = 0;
    for (double m : targets[s].edge_mask.values()) c += m;
    return c;
  };
  auto [edge_loss, edge_value] = pooled(edge_term, edge_cells);
  out.edge = edge_value;
  out.total = ad::scale(tape, edge_loss, 1.0 - lambda);
  if (label_loss) out.total = ad::add(tape, out.total, ad::scale(tape, label_loss, lambda));
  return out;
}

LossValue loss(Tape& tape, const ScoreSet& scores, const GoldTargets& targets, double lambda) {
  return batch_loss(tape, std::span<const ScoreSet>(&scores, 1), std::span<const GoldTargets>(&targets, 1), lambda);
}

ParserModel::ParserModel(ModelConfig config, Vocabulary vocab, std::optional<nn::PretrainedEmbeddings> pretrained,
                         std::uint64_t seed)
    : config_(std::move(config)), vocab_(std::move(vocab)), pretrained_(std::move(pretrained)) {
  config_.validate();
  Rng rng(seed);
  word_embed_ = nn::EmbeddingTable::random(vocab_.words.size(), config_.word_dim, rng);
  pos_embed_ = nn::EmbeddingTable::random(vocab_.pos.size(), config_.pos_dim, rng);
  if (config_.use_lemma) lemma_embed_ = nn::EmbeddingTable::random(vocab_.lemmas.size(), config_.lemma_dim, rng);
  if (pretrained_) {
    pretrained_unk_ = Tensor::zeros({1, pretrained_->dim()}, true);
    pretrained_linear_ = nn::Linear::random(pretrained_->dim(), config_.glove_linear_dim, rng);
    pretrained_drop_ = nn::glorot_uniform(1, config_.glove_linear_dim, rng);
  }
  if (config_.use_char) {
    char_encoder_ = nn::CharEncoder::random(vocab_.chars.size(), config_.char_dim, config_.char_hidden,
                                            config_.char_out, rng);
    char_drop_ = nn::glorot_uniform(1, config_.char_out, rng);
  }
  root_embed_ = nn::glorot_uniform(1, input_dim(), rng);
  bilstm_ = nn::make_bilstm(input_dim(), config_.lstm_hidden, config_.lstm_layers, rng);

  const std::size_t top = 2 * config_.lstm_hidden;
  const bool affine = config_.classifier == ClassifierKind::kBiaffine;
  if (config_.factorized) {
    std::size_t d = top;
    if (config_.edge_hidden) {
      edge_head_ = nn::Linear::random(top, config_.edge_hidden_dim, rng);
      edge_dep_ = nn::Linear::random(top, config_.edge_hidden_dim, rng);
      d = config_.edge_hidden_dim;
    }
    edge_biaffine_ = nn::BiaffineParams::zeros(d, 1, config_.edge_diagonal, affine);
  }
  std::size_t d = top;
  if (config_.label_hidden) {
    label_head_ = nn::Linear::random(top, config_.label_hidden_dim, rng);
    label_dep_ = nn::Linear::random(top, config_.label_hidden_dim, rng);
    d = config_.label_hidden_dim;
  }
  label_biaffine_ = nn::BiaffineParams::zeros(d, label_classes(), config_.label_diagonal, affine);
}

std::size_t ParserModel::input_dim() const {
  std::size_t d = config_.word_dim + config_.pos_dim;
  if (pretrained_) d += config_.glove_linear_dim;
  if (config_.use_char) d += config_.char_out;
  if (config_.use_lemma) d += config_.lemma_dim;
  return d;
}

std::size_t ParserModel::label_classes() const { return vocab_.labels.size() + (config_.factorized ? 0 : 1); }

Tensor ParserModel::embed_sequence(Tape& tape, const SemanticGraph& sentence, Rng* rng) const {
  const std::size_t n = sentence.tokens.size();
  if (n == 0) throw std::invalid_argument("embed_sequence: empty sentence");
  std::vector<std::size_t> word_ids, pos_ids, lemma_ids;
  for (const auto& t : sentence.tokens) {
    word_ids.push_back(vocab_.word_id(t));
    pos_ids.push_back(vocab_.pos_id(t));
    lemma_ids.push_back(vocab_.lemma_id(t));
  }
  // Word, pretrained and char channels share one drop decision per token;
  // pos and lemma are dropped independently of them and of each other.
  const std::vector<bool> none(n, false);
  const std::vector<bool> word_drop = rng ? nn::bernoulli_mask(n, config_.word_drop, *rng) : none;
  const std::vector<bool> pos_drop = rng ? nn::bernoulli_mask(n, config_.pos_drop, *rng) : none;
  const std::vector<bool> lemma_drop = rng && config_.use_lemma ? nn::bernoulli_mask(n, config_.lemma_drop, *rng) : none;

  std::vector<Tensor> channels;
  channels.push_back(nn::embed(tape, word_embed_, word_ids, word_drop));
  if (pretrained_) {
    std::vector<std::size_t> ids(n, 0);
    std::vector<bool> unknown(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (auto id = pretrained_->find(sentence.tokens[i].form)) ids[i] = *id;
      else unknown[i] = true;
    }
    Tensor x = ad::gather_rows(tape, pretrained_->table, ids);
    x = ad::replace_rows(tape, x, unknown, pretrained_unk_);
    x = nn::linear(tape, x, pretrained_linear_);
    channels.push_back(ad::replace_rows(tape, x, word_drop, pretrained_drop_));
  }
  if (config_.use_char) {
    std::vector<std::vector<std::size_t>> chars;
    for (const auto& t : sentence.tokens) chars.push_back(vocab_.char_ids(t));
    const nn::CharDropout drop{config_.char_ff_drop, config_.char_recur_drop, config_.char_linear_drop, rng};
    Tensor x = nn::char_encode(tape, chars, char_encoder_, Vocabulary::kBoundary, drop);
    channels.push_back(ad::replace_rows(tape, x, word_drop, char_drop_));
  }
  channels.push_back(nn::embed(tape, pos_embed_, pos_ids, pos_drop));
  if (config_.use_lemma) channels.push_back(nn::embed(tape, lemma_embed_, lemma_ids, lemma_drop));
  return ad::concat(tape, channels, 1);
}

Tensor ParserModel::encode(Tape& tape, const Tensor& x, Rng* rng) const {
  if (x.rank() != 2 || x.dim(1) != input_dim()) {
    throw ad::DimensionError("encode: input " + ad::shape_string(x.shape()) + ", expected width " +
                             std::to_string(input_dim()));
  }
  const Tensor with_root = ad::concat(tape, {root_embed_, x}, 0);
  const nn::LstmDropout drop{config_.lstm_ff_drop, config_.lstm_recur_drop, rng};
  return nn::bilstm(tape, with_root, bilstm_, drop);
}

ScoreSet ParserModel::score(Tape& tape, const Tensor& states, Rng* rng) const {
  if (states.rank() != 2 || states.dim(1) != 2 * config_.lstm_hidden) {
    throw ad::DimensionError("score: states " + ad::shape_string(states.shape()) + " for recurrent size " +
                             std::to_string(config_.lstm_hidden));
  }
  const std::size_t n1 = states.dim(0);
  const auto act = config_.nonlinearity == Activation::kRelu ? nn::Nonlinearity::kRelu : nn::Nonlinearity::kIdentity;
  auto project = [&](const nn::Linear& layer, double rate) {
    return nn::dropout(tape, nn::fnn_head(tape, states, layer, act), rate, rng);
  };

  ScoreSet out;
  out.factorized = config_.factorized;
  if (config_.factorized) {
    Tensor dep = states, head = states;
    if (config_.edge_hidden) {
      dep = project(edge_dep_, config_.edge_drop);
      head = project(edge_head_, config_.edge_drop);
    }
    const Tensor s = ad::swap_leading_axes(tape, nn::biaffine(tape, dep, head, edge_biaffine_));
    out.edge_scores = ad::reshape(tape, s, {n1, n1});
  }
  Tensor dep = states, head = states;
  if (config_.label_hidden) {
    dep = project(label_dep_, config_.label_drop);
    head = project(label_head_, config_.label_drop);
  }
  out.label_scores = ad::swap_leading_axes(tape, nn::biaffine(tape, dep, head, label_biaffine_));
  if (!config_.factorized) out.null_label = label_classes() - 1;
  return out;
}

ScoreSet ParserModel::forward(Tape& tape, const SemanticGraph& sentence, Rng* rng) const {
  return score(tape, encode(tape, embed_sequence(tape, sentence, rng), rng), rng);
}

GoldTargets ParserModel::targets(const SemanticGraph& gold) const {
  return make_targets(gold, vocab_.labels, config_.factorized, config_.factorized ? 0 : label_classes() - 1);
}

SemanticGraph ParserModel::parse(const SemanticGraph& sentence) const {
  Tape tape(false);
  return decode(forward(tape, sentence, nullptr), sentence, vocab_.labels);
}

std::vector<NamedTensor> ParserModel::parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"word_embed", word_embed_.table});
  out.push_back({"pos_embed", pos_embed_.table});
  if (config_.use_lemma) out.push_back({"lemma_embed", lemma_embed_.table});
  if (pretrained_) {
    out.push_back({"pretrained.unk", pretrained_unk_});
    pretrained_linear_.collect("pretrained.linear", out);
    out.push_back({"pretrained.drop", pretrained_drop_});
  }
  if (config_.use_char) {
    char_encoder_.collect("char", out);
    out.push_back({"char.drop", char_drop_});
  }
  out.push_back({"root_embed", root_embed_});
  nn::collect(bilstm_, "bilstm", out);
  if (config_.factorized) {
    if (config_.edge_hidden) {
      edge_head_.collect("edge_head", out);
      edge_dep_.collect("edge_dep", out);
    }
    edge_biaffine_.collect("edge_scorer", out);
  }
  if (config_.label_hidden) {
    label_head_.collect("label_head", out);
    label_dep_.collect("label_dep", out);
  }
  label_biaffine_.collect("label_scorer", out);
  return out;
}

std::vector<NamedTensor> ParserModel::state() const {
  auto out = parameters();
  if (pretrained_) out.push_back({"pretrained.table", pretrained_->table});
  return out;
}

void ParserModel::load_state(const std::vector<NamedTensor>& tensors) {
  auto mine = state();
  ad::assign_values(mine, tensors);
}

}  // namespace sdp::model

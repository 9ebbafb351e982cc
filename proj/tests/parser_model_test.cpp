#include <gtest/gtest.h>

#include <cmath>

#include "sdp/parser_model.hpp"
#include "test_support.hpp"

namespace sdp::model {
namespace {

using data::SemanticGraph;
using testing::random_graph;
using testing::random_scores;
using testing::reference_decode;

data::Vocabulary vocab_for(const std::vector<SemanticGraph>& corpus) { return data::build_vocab(corpus, 1); }

SemanticGraph figure() {
  SemanticGraph g;
  g.id = "20001001";
  g.tokens = {data::make_token(1, "Mary", "Mary", "NNP"), data::make_token(2, "wants", "want", "VBZ"),
              data::make_token(3, "to", "to", "TO"),      data::make_token(4, "buy", "buy", "VB"),
              data::make_token(5, "a", "a", "DT"),        data::make_token(6, "book", "book", "NN")};
  g.add_edge(2, 1, "ARG1");
  g.add_edge(4, 1, "ARG1");
  g.add_edge(2, 4, "ARG2");
  g.add_edge(4, 6, "ARG2");
  g.add_edge(5, 6, "BV");
  g.add_top(2);
  return g;
}

// Small model whose scorers start from random rather than zero weights.
ParserModel random_model(ModelConfig config, const std::vector<SemanticGraph>& corpus, std::uint64_t seed) {
  ParserModel m(config, vocab_for(corpus), std::nullopt, seed);
  Rng rng(seed + 100);
  const bool affine = config.classifier == ClassifierKind::kBiaffine;
  const std::size_t top = 2 * config.lstm_hidden;
  if (config.factorized) {
    m.edge_scorer() = nn::BiaffineParams::random(config.edge_hidden ? config.edge_hidden_dim : top, 1,
                                                 config.edge_diagonal, affine, rng);
  }
  m.label_scorer() = nn::BiaffineParams::random(config.label_hidden ? config.label_hidden_dim : top,
                                                m.label_classes(), config.label_diagonal, affine, rng);
  return m;
}

ScoreSet hand_scores(std::vector<double> edges, std::vector<double> labels, std::size_t n1, std::size_t c) {
  ScoreSet s;
  s.edge_scores = Tensor({n1, n1}, std::move(edges));
  s.label_scores = Tensor({n1, n1, c}, std::move(labels));
  return s;
}

TEST(Decode, AllNegativeIsEmpty) {
  const ScoreSet s = hand_scores(std::vector<double>(9, -1.0), std::vector<double>(27, 0.5), 3, 3);
  EXPECT_TRUE(decode_edges(s).empty());
}

TEST(Decode, ZeroScoreIsKept) {
  std::vector<double> edges(9, -1.0);
  edges[1 * 3 + 2] = 0.0;
  std::vector<double> labels(27, 0.0);
  labels[(1 * 3 + 2) * 3 + 2] = 1.0;
  const auto out = decode_edges(hand_scores(edges, labels, 3, 3));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], (DecodedEdge{1, 2, 2}));
}

TEST(Decode, TiesGoToLowestLabelAndRootTakesTop) {
  std::vector<double> edges(9, -1.0);
  edges[0 * 3 + 1] = 2.0;  // root -> 1
  edges[1 * 3 + 2] = 2.0;
  edges[2 * 3 + 0] = 5.0;  // dependent = root: never decoded
  edges[1 * 3 + 1] = 5.0;  // self loop: never decoded
  std::vector<double> labels(27, 0.0);
  labels[(0 * 3 + 1) * 3 + 2] = 9.0;  // ignored: root edges are tops
  labels[(1 * 3 + 2) * 3 + 0] = 9.0;  // ignored: top label is not a token label
  const auto out = decode_edges(hand_scores(edges, labels, 3, 3));
  EXPECT_EQ(out, (std::vector<DecodedEdge>{{0, 1, 0}, {1, 2, 1}}));
}

TEST(Decode, GraphCarriesTopsAndLabels) {
  data::SymbolMap labels({data::kTopLabel}, std::nullopt);
  labels.add("ARG1");
  labels.add("ARG2");
  std::vector<double> edges(9, -3.0);
  edges[0 * 3 + 2] = 1.0;
  edges[2 * 3 + 1] = 1.0;
  std::vector<double> ls(27, 0.0);
  ls[(2 * 3 + 1) * 3 + 2] = 4.0;
  SemanticGraph sentence;
  sentence.tokens = {data::make_token(1, "Dogs", "dog", "NNS"), data::make_token(2, "bark", "bark", "VBP")};
  const auto g = decode(hand_scores(edges, ls, 3, 3), sentence, labels);
  EXPECT_EQ(g.tops, (std::set<int>{2}));
  EXPECT_EQ(g.edges, (std::map<std::pair<int, int>, std::string>{{{2, 1}, "ARG2"}}));
  EXPECT_EQ(g.tokens, sentence.tokens);
}

TEST(Decode, UnfactorizedNullLosesTies) {
  ScoreSet s;
  s.factorized = false;
  s.null_label = 2;
  std::vector<double> ls(2 * 2 * 3, 0.0);
  s.label_scores = Tensor({2, 2, 3}, ls);
  // root -> 1: {top, null} tie -> top; nothing else can be decoded.
  EXPECT_EQ(decode_edges(s), (std::vector<DecodedEdge>{{0, 1, 0}}));
}

TEST(Decode, MatchesPerCellOracle) {
  testing::Rng rng(500);
  for (int trial = 0; trial < 500; ++trial) {
    const bool factorized = trial % 2 == 0;
    const auto s = random_scores(rng, static_cast<std::size_t>(testing::uniform_int(rng, 1, 5)),
                                 static_cast<std::size_t>(testing::uniform_int(rng, 1, 4)), factorized);
    auto got = decode_edges(s);
    std::sort(got.begin(), got.end());
    ASSERT_EQ(got, reference_decode(s)) << "trial " << trial;
  }
}

TEST(Loss, LambdaOutsideOpenIntervalThrows) {
  const auto g = figure();
  const auto vocab = vocab_for({g});
  const auto t = make_targets(g, vocab.labels, true, 0);
  const ScoreSet s = hand_scores(std::vector<double>(49, 0.0), std::vector<double>(49 * vocab.labels.size(), 0.0), 7,
                                 vocab.labels.size());
  Tape tape;
  for (double bad : {0.0, 1.0, -0.5, 1.5}) EXPECT_THROW(loss(tape, s, t, bad), std::invalid_argument);
  EXPECT_NO_THROW(loss(tape, s, t, 0.025));
}

// Direct per-cell evaluation of the interpolated loss.
double oracle_loss(const ScoreSet& s, const SemanticGraph& gold, const data::SymbolMap& labels, double lambda) {
  const std::size_t n1 = s.label_scores.dim(0), c = s.label_scores.dim(2);
  double edge = 0, label = 0;
  int edge_cells = 0, label_cells = 0;
  for (std::size_t h = 0; h < n1; ++h) {
    for (std::size_t d = 1; d < n1; ++d) {
      const bool top = h == 0 && gold.tops.count(static_cast<int>(d));
      const auto it = gold.edges.find({static_cast<int>(h), static_cast<int>(d)});
      const bool is_gold = top || it != gold.edges.end();
      const double z = s.edge_scores[h * n1 + d];
      const double p = 1.0 / (1.0 + std::exp(-z));
      edge += is_gold ? -std::log(p) : -std::log(1.0 - p);
      ++edge_cells;
      if (!is_gold) continue;
      const std::size_t k = top ? 0 : *labels.find(it->second);
      double denom = 0;
      for (std::size_t j = 0; j < c; ++j) denom += std::exp(s.label_scores[(h * n1 + d) * c + j]);
      label += -(s.label_scores[(h * n1 + d) * c + k] - std::log(denom));
      ++label_cells;
    }
  }
  const double e = edge / edge_cells;
  const double l = label_cells ? label / label_cells : 0.0;
  return lambda * l + (1 - lambda) * e;
}

TEST(Loss, MatchesPerCellOracle) {
  testing::Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_graph(rng, 5, 0.3);
    auto vocab = vocab_for({g});
    const std::size_t n1 = static_cast<std::size_t>(g.size()) + 1, c = vocab.labels.size();
    std::vector<double> e(n1 * n1), l(n1 * n1 * c);
    std::uniform_real_distribution<double> u(-3, 3);
    for (auto& v : e) v = u(rng);
    for (auto& v : l) v = u(rng);
    const ScoreSet s = hand_scores(e, l, n1, c);
    Tape tape(false);
    const auto value = loss(tape, s, make_targets(g, vocab.labels, true, 0), 0.025);
    EXPECT_NEAR(value.total.item(), oracle_loss(s, g, vocab.labels, 0.025), 1e-12);
  }
}

TEST(Loss, EmptyGoldLeavesOnlyEdgeTerm) {
  SemanticGraph g;
  g.tokens = {data::make_token(1, "a", "a", "X"), data::make_token(2, "b", "b", "X")};
  data::SymbolMap labels({data::kTopLabel}, std::nullopt);
  labels.add("L");
  std::vector<double> e{0.3, -1.0, 2.0, 0.1, -0.4, 0.9, 1.1, 0.0, -2.0};
  const ScoreSet s = hand_scores(e, std::vector<double>(18, 0.7), 3, 2);
  Tape tape(false);
  const auto v = loss(tape, s, make_targets(g, labels, true, 0), 0.025);
  EXPECT_EQ(v.label, 0.0);
  EXPECT_NEAR(v.total.item(), 0.975 * v.edge, 1e-15);
}

TEST(Loss, ConfidentScoresApproachZeroMonotonically) {
  const auto g = figure();
  const auto vocab = vocab_for({g});
  const auto t = make_targets(g, vocab.labels, true, 0);
  const std::size_t n1 = 7, c = vocab.labels.size();
  double previous = INFINITY;
  for (double mag : {1.0, 2.0, 5.0, 10.0}) {
    std::vector<double> e(n1 * n1), l(n1 * n1 * c);
    for (std::size_t cell = 0; cell < n1 * n1; ++cell) {
      e[cell] = t.edge_gold[cell] > 0 ? mag : -mag;
      for (std::size_t k = 0; k < c; ++k) l[cell * c + k] = k == t.label_gold[cell] ? mag : -mag;
    }
    Tape tape(false);
    const double value = loss(tape, hand_scores(e, l, n1, c), t, 0.025).total.item();
    EXPECT_LT(value, previous);
    previous = value;
    if (mag == 10.0) {
      const double expected = 0.025 * std::log1p((c - 1) * std::exp(-20.0)) + 0.975 * std::log1p(std::exp(-10.0));
      EXPECT_NEAR(value, expected, 1e-15);
    }
  }
}

TEST(Loss, BatchMeanPoolsCells) {
  testing::Rng rng(8);
  const auto a = random_graph(rng, 3, 0.5), b = random_graph(rng, 6, 0.5);
  const auto vocab = vocab_for({a, b});
  const std::size_t c = vocab.labels.size();
  auto scores_for = [&](const SemanticGraph& g) {
    const std::size_t n1 = static_cast<std::size_t>(g.size()) + 1;
    std::vector<double> e(n1 * n1), l(n1 * n1 * c);
    std::uniform_real_distribution<double> u(-2, 2);
    for (auto& v : e) v = u(rng);
    for (auto& v : l) v = u(rng);
    return hand_scores(e, l, n1, c);
  };
  const std::vector<ScoreSet> s{scores_for(a), scores_for(b)};
  const std::vector<GoldTargets> t{make_targets(a, vocab.labels, true, 0), make_targets(b, vocab.labels, true, 0)};
  Tape tape(false);
  const auto pooled = batch_loss(tape, s, t, 0.5);
  // Edge cells: n(n+1) per sentence.
  const double ea = loss(tape, s[0], t[0], 0.5).edge, eb = loss(tape, s[1], t[1], 0.5).edge;
  const double na = a.size() * (a.size() + 1.0), nb = b.size() * (b.size() + 1.0);
  EXPECT_NEAR(pooled.edge, (ea * na + eb * nb) / (na + nb), 1e-12);
}

TEST(Targets, RootColumnMaskedAndTopsOnRootRow) {
  const auto g = figure();
  const auto vocab = vocab_for({g});
  const auto t = make_targets(g, vocab.labels, true, 0);
  for (std::size_t h = 0; h < 7; ++h) EXPECT_EQ(t.edge_mask[h * 7], 0.0);
  EXPECT_EQ(t.edge_gold[0 * 7 + 2], 1.0);
  EXPECT_TRUE(t.label_mask[0 * 7 + 2]);
  EXPECT_EQ(t.label_gold[0 * 7 + 2], data::Vocabulary::kTop);
  EXPECT_EQ(t.label_gold[2 * 7 + 4], *vocab.labels.find("ARG2"));
  EXPECT_EQ(std::count(t.label_mask.begin(), t.label_mask.end(), true), 6);
  EXPECT_FALSE(t.label_mask[1 * 7 + 2]);
}

TEST(Targets, UnfactorizedCoversEveryNonRootCell) {
  const auto g = figure();
  const auto vocab = vocab_for({g});
  const std::size_t null = vocab.labels.size();
  const auto t = make_targets(g, vocab.labels, false, null);
  EXPECT_EQ(std::count(t.label_mask.begin(), t.label_mask.end(), true), 7 * 6);
  EXPECT_EQ(t.label_gold[1 * 7 + 2], null);
  EXPECT_EQ(t.label_gold[2 * 7 + 1], *vocab.labels.find("ARG1"));
}

TEST(Targets, UnknownLabelThrows) {
  auto g = figure();
  const auto vocab = vocab_for({g});
  g.edges[{1, 2}] = "never";
  EXPECT_THROW(make_targets(g, vocab.labels, true, 0), std::invalid_argument);
}

TEST(Gating, LabelGradientIsZeroOffGold) {
  testing::Rng gen(31);
  std::vector<SemanticGraph> corpus;
  for (int i = 0; i < 4; ++i) corpus.push_back(random_graph(gen, 6, 0.3));
  const auto m = random_model(testing::small_config(), corpus, 5);
  Rng rng(9);
  Tape tape;
  std::vector<ScoreSet> scores;
  std::vector<GoldTargets> targets;
  for (const auto& g : corpus) {
    scores.push_back(m.forward(tape, g, &rng));
    targets.push_back(m.targets(g));
  }
  const auto value = batch_loss(tape, scores, targets, 0.025);
  tape.backward(value.total);
  std::size_t nonzero = 0;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& ls = scores[s].label_scores;
    if (!ls.has_grad()) {
      EXPECT_EQ(std::count(targets[s].label_mask.begin(), targets[s].label_mask.end(), true), 0);
      continue;
    }
    const std::size_t cells = ls.dim(0) * ls.dim(1), c = ls.dim(2);
    for (std::size_t cell = 0; cell < cells; ++cell) {
      for (std::size_t k = 0; k < c; ++k) {
        const double g = ls.grad()[cell * c + k];
        if (!targets[s].label_mask[cell]) {
          ASSERT_EQ(g, 0.0) << "sentence " << s << " cell " << cell;
        } else if (g != 0.0) {
          ++nonzero;
        }
      }
    }
  }
  EXPECT_GT(nonzero, 0u);
}

TEST(Gating, TinyLambdaStarvesTheLabeler) {
  testing::Rng gen(32);
  const std::vector<SemanticGraph> corpus{random_graph(gen, 5, 0.4), figure()};
  const auto m = random_model(testing::small_config(), corpus, 6);
  Rng rng(10);
  Tape tape;
  std::vector<ScoreSet> scores;
  std::vector<GoldTargets> targets;
  for (const auto& g : corpus) {
    scores.push_back(m.forward(tape, g, &rng));
    targets.push_back(m.targets(g));
  }
  tape.backward(batch_loss(tape, scores, targets, 1e-9).total);
  double norm = 0, edge_norm = 0;
  for (const auto& p : m.parameters()) {
    if (!p.tensor.has_grad()) continue;
    double sq = 0;
    for (double g : p.tensor.grad()) sq += g * g;
    if (p.name.rfind("label_", 0) == 0) norm += sq;
    if (p.name.rfind("edge_", 0) == 0) edge_norm += sq;
  }
  EXPECT_LT(std::sqrt(norm), 1e-6);
  EXPECT_GT(std::sqrt(edge_norm), 1e-6);
}

TEST(Model, InputWidths) {
  const auto corpus = std::vector<SemanticGraph>{figure()};
  const auto table = nn::make_pretrained({"mary"}, Tensor::zeros({1, 100}));
  ModelConfig basic;
  basic.lstm_layers = 1;
  basic.lstm_hidden = basic.edge_hidden_dim = basic.label_hidden_dim = 4;
  EXPECT_EQ(ParserModel(basic, vocab_for(corpus), table, 1).input_dim(), 325u);
  ModelConfig full = basic;
  full.use_char = full.use_lemma = true;
  EXPECT_EQ(ParserModel(full, vocab_for(corpus), table, 1).input_dim(), 525u);
}

TEST(Model, PublishedClassifierShapes) {
  const ModelConfig c;
  EXPECT_TRUE(c.label_diagonal);
  EXPECT_FALSE(c.edge_diagonal);
  EXPECT_EQ(c.nonlinearity, Activation::kIdentity);
  ModelConfig small = testing::small_config();
  ParserModel m(small, vocab_for({figure()}), std::nullopt, 1);
  EXPECT_EQ(m.edge_scorer().u.shape(), (ad::Shape{8, 1, 8}));
  EXPECT_EQ(m.label_scorer().u.shape(), (ad::Shape{m.label_classes(), 8}));
}

TEST(Model, ShapesThroughThePipeline) {
  const auto g = figure();
  ParserModel m(testing::small_config(), vocab_for({g}), std::nullopt, 2);
  Tape tape(false);
  const Tensor x = m.embed_sequence(tape, g, nullptr);
  EXPECT_EQ(x.shape(), (ad::Shape{6, m.input_dim()}));
  const Tensor r = m.encode(tape, x, nullptr);
  EXPECT_EQ(r.shape(), (ad::Shape{7, 16}));
  const ScoreSet s = m.score(tape, r, nullptr);
  EXPECT_EQ(s.edge_scores.shape(), (ad::Shape{7, 7}));
  EXPECT_EQ(s.label_scores.shape(), (ad::Shape{7, 7, m.label_classes()}));

  SemanticGraph one;
  one.tokens = {data::make_token(1, "Mary", "Mary", "NNP")};
  EXPECT_EQ(m.forward(tape, one, nullptr).edge_scores.shape(), (ad::Shape{2, 2}));
}

TEST(Model, ZeroScorersGiveZeroScores) {
  const auto g = figure();
  ParserModel m(testing::small_config(), vocab_for({g}), std::nullopt, 2);
  Tape tape(false);
  const auto s = m.forward(tape, g, nullptr);
  for (double v : s.edge_scores.values()) EXPECT_EQ(v, 0.0);
  for (double v : s.label_scores.values()) EXPECT_EQ(v, 0.0);
}

TEST(Model, InferenceIsDeterministicAndTrainingIsNot) {
  const auto g = figure();
  auto cfg = testing::small_config();
  cfg.use_char = cfg.use_lemma = true;
  const auto m = random_model(cfg, {g}, 3);
  Tape tape(false);
  const auto a = m.forward(tape, g, nullptr), b = m.forward(tape, g, nullptr);
  EXPECT_TRUE(std::equal(a.label_scores.values().begin(), a.label_scores.values().end(),
                         b.label_scores.values().begin()));
  EXPECT_EQ(m.parse(g), m.parse(g));

  Rng r1(1), r2(1), r3(2);
  const auto t1 = m.forward(tape, g, &r1), t2 = m.forward(tape, g, &r2), t3 = m.forward(tape, g, &r3);
  EXPECT_TRUE(std::equal(t1.edge_scores.values().begin(), t1.edge_scores.values().end(),
                         t2.edge_scores.values().begin()));
  EXPECT_FALSE(std::equal(t1.edge_scores.values().begin(), t1.edge_scores.values().end(),
                          t3.edge_scores.values().begin()));
}

TEST(Model, DecodedEdgesAreAllLabeled) {
  testing::Rng gen(40);
  std::vector<SemanticGraph> corpus;
  for (int i = 0; i < 5; ++i) corpus.push_back(random_graph(gen, 6, 0.3));
  const auto m = random_model(testing::small_config(), corpus, 4);
  for (const auto& g : corpus) {
    Tape tape(false);
    const auto s = m.forward(tape, g, nullptr);
    for (const auto& e : decode_edges(s)) {
      EXPECT_LT(e.label, m.label_classes());
      EXPECT_EQ(e.head == 0, e.label == data::Vocabulary::kTop);
    }
  }
}

TEST(Model, StateRoundTrip) {
  const auto g = figure();
  const auto a = random_model(testing::small_config(), {g}, 11);
  ParserModel b(testing::small_config(), vocab_for({g}), std::nullopt, 12);
  b.load_state(a.state());
  Tape tape(false);
  const auto sa = a.forward(tape, g, nullptr), sb = b.forward(tape, g, nullptr);
  EXPECT_TRUE(std::equal(sa.label_scores.values().begin(), sa.label_scores.values().end(),
                         sb.label_scores.values().begin()));
  auto wrong = a.state();
  wrong.pop_back();
  EXPECT_ANY_THROW(b.load_state(wrong));
}

TEST(Model, UnfactorizedScoresNullAsLastClass) {
  const auto g = figure();
  auto cfg = testing::small_config();
  cfg.factorized = false;
  const auto m = random_model(cfg, {g}, 7);
  EXPECT_EQ(m.label_classes(), m.vocab().labels.size() + 1);
  Tape tape(false);
  const auto s = m.forward(tape, g, nullptr);
  EXPECT_FALSE(s.factorized);
  EXPECT_FALSE(s.edge_scores);
  EXPECT_EQ(s.null_label, m.label_classes() - 1);
  auto sorted = decode_edges(s);
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, reference_decode(s));
}

TEST(Model, HiddenlessVariantsFeedRecurrentStates) {
  const auto g = figure();
  auto cfg = testing::small_config();
  cfg.edge_hidden = cfg.label_hidden = false;
  ParserModel m(cfg, vocab_for({g}), std::nullopt, 1);
  EXPECT_EQ(m.edge_scorer().dim, 16u);
  EXPECT_EQ(m.label_scorer().dim, 16u);
  for (const auto& p : m.parameters()) EXPECT_EQ(p.name.find("_head."), std::string::npos) << p.name;
}

}  // namespace
}  // namespace sdp::model

#include "sdp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "sdp/layers.hpp"
#include "sdp/parser_model.hpp"
#include "sdp/vocab.hpp"

namespace sdp::gradcheck {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

CheckResult check(const std::string& name, const std::function<Tensor(Tape&)>& loss,
                  const std::vector<Tensor>& inputs, const CheckOptions& options) {
  for (const auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  Tape tape;
  const Tensor out = loss(tape);
  tape.backward(out);

  CheckResult result{name, 0.0, 0, true};
  for (const auto& x : inputs) {
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    auto values = x.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.step;
      Tape plus(false);
      const double fp = loss(plus).item();
      values[i] = original - options.step;
      Tape minus(false);
      const double fm = loss(minus).item();
      values[i] = original;
      const double numeric = (fp - fm) / (2.0 * options.step);
      result.max_error = std::max(result.max_error, relative_error(analytic[i], numeric, options.floor));
      ++result.entries;
    }
  }
  result.passed = result.max_error < options.tolerance;
  return result;
}

namespace {

Tensor random_tensor(Shape shape, nn::Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

// Values bounded away from zero so relu's kink stays out of reach of the
// finite-difference step.
Tensor away_from_zero(Shape shape, nn::Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& x : t.mutable_values())
    if (sign(rng)) x = -x;
  return t;
}

// Scalar probe sum(y * r) with a fixed random r, so every output entry gets a
// distinct upstream gradient.
Tensor probe(Tape& tape, const Tensor& y, const Tensor& r) { return ad::sum(tape, ad::mul(tape, y, r)); }

class Suite {
 public:
  Suite(std::uint64_t seed, const CheckOptions& options) : rng_(seed), options_(options) {}

  template <typename F>
  void unary(const std::string& name, Tensor x, F op) {
    const Tensor y0 = op(*scratch(), x);
    const Tensor r = random_tensor(y0.shape(), rng_);
    add(name, [=](Tape& t) { return probe(t, op(t, x), r); }, {x});
  }

  template <typename F>
  void binary(const std::string& name, Tensor a, Tensor b, F op) {
    const Tensor y0 = op(*scratch(), a, b);
    const Tensor r = random_tensor(y0.shape(), rng_);
    add(name, [=](Tape& t) { return probe(t, op(t, a, b), r); }, {a, b});
  }

  void add(const std::string& name, const std::function<Tensor(Tape&)>& loss, const std::vector<Tensor>& inputs) {
    results_.push_back(check(name, loss, inputs, options_));
  }

  nn::Rng& rng() { return rng_; }
  std::vector<CheckResult> take() { return std::move(results_); }

 private:
  Tape* scratch() {
    scratch_ = std::make_unique<Tape>(false);
    return scratch_.get();
  }

  nn::Rng rng_;
  CheckOptions options_;
  std::unique_ptr<Tape> scratch_;
  std::vector<CheckResult> results_;
};

std::vector<Tensor> params_of(const std::vector<ad::NamedTensor>& named) {
  std::vector<Tensor> out;
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

data::SemanticGraph three_token_sentence() {
  data::SemanticGraph g;
  g.id = "gradcheck";
  g.tokens.push_back(data::make_token(1, "Mary", "Mary", "NNP"));
  g.tokens.push_back(data::make_token(2, "sings", "sing", "VBZ"));
  g.tokens.push_back(data::make_token(3, "loudly", "loudly", "RB"));
  g.add_edge(2, 1, "ARG1");
  g.add_edge(3, 2, "ARG1");
  g.add_top(2);
  return g;
}

model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.word_dim = c.pos_dim = c.lemma_dim = 3;
  c.glove_linear_dim = 3;
  c.char_dim = 2;
  c.char_hidden = 3;
  c.char_out = 3;
  c.lstm_hidden = 3;
  c.lstm_layers = 2;
  c.edge_hidden_dim = c.label_hidden_dim = 3;
  c.use_char = c.use_lemma = true;
  return c;
}

void randomize(nn::BiaffineParams& p, nn::Rng& rng) {
  for (Tensor* t : {&p.u, &p.w, &p.b}) {
    if (!*t) continue;
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& x : t->mutable_values()) x = u(rng);
  }
}

void end_to_end(Suite& suite, const std::string& name, model::ModelConfig config) {
  const auto sentence = three_token_sentence();
  const std::vector<data::SemanticGraph> corpus{sentence};
  auto vocab = data::build_vocab(corpus, 1);
  auto pretrained = nn::make_pretrained({"mary", "sings"}, random_tensor({2, 4}, suite.rng()));
  pretrained.table.set_requires_grad(false);
  auto parser = std::make_shared<model::ParserModel>(config, vocab, pretrained, 17);
  randomize(parser->edge_scorer(), suite.rng());
  randomize(parser->label_scorer(), suite.rng());
  const auto targets = parser->targets(sentence);
  const double lambda = config.interpolation;
  suite.add(
      name,
      [parser, sentence, targets, lambda](Tape& t) {
        nn::Rng dropout_rng(99);
        const auto scores = parser->forward(t, sentence, &dropout_rng);
        return model::loss(t, scores, targets, lambda).total;
      },
      params_of(parser->parameters()));
}

}  // namespace

std::vector<CheckResult> run_suite(std::uint64_t seed, const CheckOptions& options) {
  Suite s(seed, options);
  auto& rng = s.rng();

  // Autodiff core.
  s.binary("add", random_tensor({3, 4}, rng), random_tensor({3, 4}, rng),
           [](Tape& t, const Tensor& a, const Tensor& b) { return ad::add(t, a, b); });
  s.binary("add/broadcast", random_tensor({2, 3, 4}, rng), random_tensor({1, 4}, rng),
           [](Tape& t, const Tensor& a, const Tensor& b) { return ad::add(t, a, b); });
  s.binary("mul", random_tensor({3, 4}, rng), random_tensor({3, 4}, rng),
           [](Tape& t, const Tensor& a, const Tensor& b) { return ad::mul(t, a, b); });
  s.binary("mul/broadcast", random_tensor({3, 4}, rng), random_tensor({4}, rng),
           [](Tape& t, const Tensor& a, const Tensor& b) { return ad::mul(t, a, b); });
  s.unary("sigmoid", random_tensor({3, 4}, rng, -3, 3), [](Tape& t, const Tensor& x) { return ad::sigmoid(t, x); });
  s.unary("tanh", random_tensor({3, 4}, rng, -2, 2), [](Tape& t, const Tensor& x) { return ad::tanh(t, x); });
  s.unary("relu", away_from_zero({3, 4}, rng), [](Tape& t, const Tensor& x) { return ad::relu(t, x); });
  s.unary("identity", random_tensor({5}, rng), [](Tape& t, const Tensor& x) {
    return ad::elementwise(t, ad::ElementwiseOp::kIdentity, x);
  });
  s.unary("scale", random_tensor({2, 3}, rng), [](Tape& t, const Tensor& x) { return ad::scale(t, x, -1.7); });
  s.unary("sum", random_tensor({2, 3}, rng), [](Tape& t, const Tensor& x) { return ad::sum(t, x); });
  s.binary("matmul", random_tensor({3, 4}, rng), random_tensor({4, 2}, rng),
           [](Tape& t, const Tensor& a, const Tensor& b) { return ad::matmul(t, a, b); });
  s.binary("concat/rows", random_tensor({2, 3}, rng), random_tensor({1, 3}, rng),
           [](Tape& t, const Tensor& a, const Tensor& b) { return ad::concat(t, {a, b}, 0); });
  s.binary("concat/columns", random_tensor({2, 3}, rng), random_tensor({2, 2}, rng),
           [](Tape& t, const Tensor& a, const Tensor& b) { return ad::concat(t, {a, b}, 1); });
  s.unary("slice", random_tensor({4, 5}, rng), [](Tape& t, const Tensor& x) { return ad::slice(t, x, 1, 1, 4); });
  s.unary("row", random_tensor({4, 3}, rng), [](Tape& t, const Tensor& x) { return ad::row(t, x, 2); });
  s.unary("reshape", random_tensor({2, 6}, rng), [](Tape& t, const Tensor& x) { return ad::reshape(t, x, {3, 4}); });
  s.unary("swap_leading_axes/2d", random_tensor({2, 3}, rng),
          [](Tape& t, const Tensor& x) { return ad::swap_leading_axes(t, x); });
  s.unary("swap_leading_axes/3d", random_tensor({2, 3, 2}, rng),
          [](Tape& t, const Tensor& x) { return ad::swap_leading_axes(t, x); });
  {
    const std::vector<std::size_t> ids{2, 0, 2, 1};
    s.unary("gather_rows", random_tensor({3, 2}, rng),
            [ids](Tape& t, const Tensor& x) { return ad::gather_rows(t, x, ids); });
  }
  {
    const std::vector<bool> mask{true, false, true};
    s.binary("replace_rows", random_tensor({3, 2}, rng), random_tensor({1, 2}, rng),
             [mask](Tape& t, const Tensor& a, const Tensor& r) { return ad::replace_rows(t, a, mask, r); });
  }
  {
    const Tensor logits = random_tensor({4, 3}, rng, -2, 2);
    const std::vector<std::size_t> gold{0, 2, 1, 1};
    const std::vector<bool> mask{true, false, true, true};
    s.add("softmax_xent", [=](Tape& t) { return ad::softmax_xent(t, logits, gold, mask); }, {logits});
  }
  {
    const Tensor logits = random_tensor({3, 3}, rng, -3, 3);
    const Tensor gold({3, 3}, {1, 0, 0, 0, 1, 1, 0, 0, 1});
    const Tensor mask({3, 3}, {1, 1, 0, 1, 1, 1, 0, 1, 1});
    s.add("sigmoid_xent", [=](Tape& t) { return ad::sigmoid_xent(t, logits, gold, mask); }, {logits});
  }

  // Layers.
  {
    auto layer = nn::Linear::random(4, 3, rng);
    layer.bias = random_tensor({1, 3}, rng);
    const Tensor x = random_tensor({2, 4}, rng);
    const Tensor r = random_tensor({2, 3}, rng);
    s.add("linear", [=](Tape& t) { return probe(t, nn::linear(t, x, layer), r); }, {x, layer.weight, layer.bias});
    s.add("fnn_head/identity",
          [=](Tape& t) { return probe(t, nn::fnn_head(t, x, layer, nn::Nonlinearity::kIdentity), r); },
          {x, layer.weight, layer.bias});
  }
  {
    nn::Linear layer{away_from_zero({1, 3}, rng), Tensor::zeros({1, 3}, true)};
    const Tensor x = Tensor({2, 1}, {1.0, -0.8}, true);
    const Tensor r = random_tensor({2, 3}, rng);
    s.add("fnn_head/relu", [=](Tape& t) { return probe(t, nn::fnn_head(t, x, layer, nn::Nonlinearity::kRelu), r); },
          {layer.weight, layer.bias});
  }
  {
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor r = random_tensor({3, 4}, rng);
    s.add("dropout",
          [=](Tape& t) {
            nn::Rng mask_rng(5);
            return probe(t, nn::dropout(t, x, 0.4, &mask_rng), r);
          },
          {x});
  }
  {
    auto table = nn::EmbeddingTable::random(5, 3, rng);
    const std::vector<std::size_t> ids{4, 2, 4, 3};
    const std::vector<bool> drop{false, true, false, false};
    const Tensor r = random_tensor({4, 3}, rng);
    s.add("embed", [=](Tape& t) { return probe(t, nn::embed(t, table, ids, drop), r); }, {table.table});
  }
  for (bool reverse : {false, true}) {
    auto params = nn::LstmParams::random(3, 2, reverse, rng);
    const Tensor x = random_tensor({4, 3}, rng);
    const Tensor r = random_tensor({4, 2}, rng);
    s.add(reverse ? "lstm/reverse" : "lstm/forward",
          [=](Tape& t) {
            nn::Rng mask_rng(7);
            return probe(t, nn::lstm(t, x, params, {0.3, 0.3, &mask_rng}), r);
          },
          {x, params.wx, params.wh, params.b});
  }
  {
    auto layers = nn::make_bilstm(3, 2, 2, rng);
    std::vector<ad::NamedTensor> named;
    nn::collect(layers, "bilstm", named);
    const Tensor x = random_tensor({3, 3}, rng);
    const Tensor r = random_tensor({3, 4}, rng);
    auto inputs = params_of(named);
    inputs.push_back(x);
    s.add("bilstm",
          [=](Tape& t) {
            nn::Rng mask_rng(11);
            return probe(t, nn::bilstm(t, x, layers, {0.2, 0.2, &mask_rng}), r);
          },
          inputs);
  }
  {
    auto encoder = nn::CharEncoder::random(6, 2, 3, 2, rng);
    std::vector<ad::NamedTensor> named;
    encoder.collect("char", named);
    const std::vector<std::vector<std::size_t>> words{{3, 4, 5, 3}, {5}, {4, 3, 5}};
    const Tensor r = random_tensor({3, 2}, rng);
    s.add("char_encode",
          [=](Tape& t) {
            nn::Rng mask_rng(13);
            return probe(t, nn::char_encode(t, words, encoder, data::Vocabulary::kBoundary, {0.2, 0.2, 0.2, &mask_rng}),
                         r);
          },
          params_of(named));
  }
  for (bool diagonal : {true, false}) {
    for (bool affine : {true, false}) {
      auto params = nn::BiaffineParams::random(3, 2, diagonal, affine, rng);
      if (params.b) params.b = random_tensor(params.b.shape(), rng);
      std::vector<ad::NamedTensor> named;
      params.collect("biaffine", named);
      const Tensor dep = random_tensor({3, 3}, rng);
      const Tensor head = random_tensor({4, 3}, rng);
      const Tensor r = random_tensor({3, 4, 2}, rng);
      auto inputs = params_of(named);
      inputs.push_back(dep);
      inputs.push_back(head);
      std::string name = std::string("biaffine/") + (diagonal ? "diagonal" : "full") + (affine ? "" : "/bilinear");
      s.add(name, [=](Tape& t) { return probe(t, nn::biaffine(t, dep, head, params), r); }, inputs);
    }
  }

  // Whole parser.
  end_to_end(s, "parser/factorized", tiny_config());
  {
    auto c = tiny_config();
    c.factorized = false;
    end_to_end(s, "parser/unfactorized", c);
  }
  return s.take();
}

void write_results(std::ostream& out, const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    out << std::left << std::setw(28) << r.name << std::right << std::setw(8) << r.entries << "  max_rel_err="
        << std::scientific << std::setprecision(3) << r.max_error << std::defaultfloat << "  "
        << (r.passed ? "ok" : "FAIL") << '\n';
  }
}

}  // namespace sdp::gradcheck

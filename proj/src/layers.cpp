#include "sdp/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace sdp::nn {

using ad::DimensionError;
using ad::shape_string;

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor({rows, cols}, std::move(v), true);
}

std::vector<bool> bernoulli_mask(std::size_t n, double rate, Rng& rng) {
  std::vector<bool> mask(n, false);
  if (rate <= 0.0) return mask;
  std::bernoulli_distribution drop(rate);
  for (std::size_t i = 0; i < n; ++i) mask[i] = drop(rng);
  return mask;
}

Tensor dropout_mask(ad::Shape shape, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = drop(rng) ? 0.0 : keep_scale;
  return Tensor(std::move(shape), std::move(v));
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, Rng* rng) {
  if (!rng || rate <= 0.0) return x;
  return ad::mul(tape, x, dropout_mask(x.shape(), rate, *rng));
}

EmbeddingTable EmbeddingTable::random(std::size_t rows, std::size_t dim, Rng& rng) {
  const double limit = std::sqrt(3.0 / static_cast<double>(dim));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(rows * dim);
  for (auto& x : v) x = dist(rng);
  EmbeddingTable t;
  t.table = Tensor({rows, dim}, std::move(v), true);
  return t;
}

Tensor embed(Tape& tape, const EmbeddingTable& table, std::span<const std::size_t> ids,
             const std::vector<bool>& drop_mask) {
  if (drop_mask.size() != ids.size()) {
    throw DimensionError("embed: " + std::to_string(ids.size()) + " ids but " + std::to_string(drop_mask.size()) +
                         " drop flags");
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (drop_mask[i]) rows[i] = table.drop_row;
  }
  return ad::gather_rows(tape, table.table, rows);
}

Linear Linear::random(std::size_t in, std::size_t out, Rng& rng) {
  return Linear{glorot_uniform(in, out, rng), Tensor::zeros({1, out}, true)};
}

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Tensor linear(Tape& tape, const Tensor& x, const Linear& layer) {
  return ad::add(tape, ad::matmul(tape, x, layer.weight), layer.bias);
}

Tensor fnn_head(Tape& tape, const Tensor& x, const Linear& layer, Nonlinearity nonlinearity) {
  Tensor y = linear(tape, x, layer);
  return nonlinearity == Nonlinearity::kRelu ? ad::relu(tape, y) : y;
}

LstmParams LstmParams::random(std::size_t in, std::size_t hidden, bool reverse, Rng& rng) {
  LstmParams p;
  p.wx = glorot_uniform(in, 4 * hidden, rng);
  p.wh = glorot_uniform(hidden, 4 * hidden, rng);
  p.b = Tensor::zeros({1, 4 * hidden}, true);
  p.reverse = reverse;
  return p;
}

void LstmParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".wx", wx});
  out.push_back({prefix + ".wh", wh});
  out.push_back({prefix + ".b", b});
}

Tensor lstm(Tape& tape, const Tensor& x, const LstmParams& params, const LstmDropout& dropout, DropoutTrace* trace) {
  if (x.rank() != 2 || x.dim(1) != params.input_size()) {
    throw DimensionError("lstm: input " + shape_string(x.shape()) + " for input size " +
                         std::to_string(params.input_size()));
  }
  const std::size_t n = x.dim(0);
  const std::size_t h = params.hidden_size();

  Tensor input = x;
  if (dropout.rng && dropout.feedforward > 0.0) {
    Tensor mask = dropout_mask({1, x.dim(1)}, dropout.feedforward, *dropout.rng);
    if (trace) trace->feedforward.assign(mask.values().begin(), mask.values().end());
    input = ad::mul(tape, x, mask);
  }
  Tensor recur_mask;
  if (dropout.rng && dropout.recurrent > 0.0) recur_mask = dropout_mask({1, h}, dropout.recurrent, *dropout.rng);

  const Tensor pre_all = ad::add(tape, ad::matmul(tape, input, params.wx), params.b);
  std::vector<Tensor> outputs(n);
  Tensor h_prev, c_prev;
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t t = params.reverse ? n - 1 - s : s;
    Tensor pre = ad::row(tape, pre_all, t);
    if (h_prev) {
      Tensor h_in = h_prev;
      if (recur_mask) {
        h_in = ad::mul(tape, h_prev, recur_mask);
        if (trace) trace->recurrent.emplace_back(recur_mask.values().begin(), recur_mask.values().end());
      }
      pre = ad::add(tape, pre, ad::matmul(tape, h_in, params.wh));
    }
    const Tensor gates = ad::sigmoid(tape, ad::slice(tape, pre, 1, 0, 3 * h));
    const Tensor in_gate = ad::slice(tape, gates, 1, 0, h);
    const Tensor forget_gate = ad::slice(tape, gates, 1, h, 2 * h);
    const Tensor out_gate = ad::slice(tape, gates, 1, 2 * h, 3 * h);
    const Tensor candidate = ad::tanh(tape, ad::slice(tape, pre, 1, 3 * h, 4 * h));
    Tensor c = ad::mul(tape, in_gate, candidate);
    if (c_prev) c = ad::add(tape, ad::mul(tape, forget_gate, c_prev), c);
    Tensor h_cur = ad::mul(tape, out_gate, ad::tanh(tape, c));
    outputs[t] = h_cur;
    h_prev = h_cur;
    c_prev = c;
  }
  return ad::concat(tape, outputs, 0);
}

std::vector<BiLstmLayer> make_bilstm(std::size_t input, std::size_t hidden, std::size_t layers, Rng& rng) {
  std::vector<BiLstmLayer> out;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input : 2 * hidden;
    BiLstmLayer layer;
    layer.forward = LstmParams::random(in, hidden, false, rng);
    layer.backward = LstmParams::random(in, hidden, true, rng);
    out.push_back(std::move(layer));
  }
  return out;
}

void collect(const std::vector<BiLstmLayer>& layers, const std::string& prefix, std::vector<NamedTensor>& out) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    layers[l].forward.collect(p + ".fwd", out);
    layers[l].backward.collect(p + ".bwd", out);
  }
}

Tensor bilstm(Tape& tape, const Tensor& x, std::span<const BiLstmLayer> layers, const LstmDropout& dropout) {
  if (layers.empty()) throw std::invalid_argument("bilstm: no layers");
  Tensor input = x;
  for (const auto& layer : layers) {
    Tensor fwd = lstm(tape, input, layer.forward, dropout);
    Tensor bwd = lstm(tape, input, layer.backward, dropout);
    input = ad::concat(tape, {fwd, bwd}, 1);
  }
  return input;
}

CharEncoder CharEncoder::random(std::size_t alphabet, std::size_t char_dim, std::size_t hidden, std::size_t out_dim,
                                Rng& rng) {
  CharEncoder e;
  e.chars = EmbeddingTable::random(alphabet, char_dim, rng);
  e.lstm = LstmParams::random(3 * char_dim, hidden, false, rng);
  e.output = Linear::random(hidden, out_dim, rng);
  return e;
}

void CharEncoder::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".embed", chars.table});
  lstm.collect(prefix + ".lstm", out);
  output.collect(prefix + ".linear", out);
}

Tensor char_encode(Tape& tape, std::span<const std::vector<std::size_t>> words, const CharEncoder& encoder,
                   std::size_t boundary_id, const CharDropout& dropout) {
  if (words.empty()) throw DimensionError("char_encode: no words");
  const LstmDropout lstm_dropout{dropout.feedforward, dropout.recurrent, dropout.rng};
  std::vector<Tensor> finals;
  finals.reserve(words.size());
  for (const auto& word : words) {
    if (word.empty()) throw std::invalid_argument("char_encode: empty character sequence");
    std::vector<std::size_t> ids = word;
    while (ids.size() < 3) ids.push_back(boundary_id);
    const std::size_t windows = char_window_count(word.size());
    const Tensor emb = ad::gather_rows(tape, encoder.chars.table, ids);
    Tensor window_input;
    if (ids.size() == 3) {
      window_input = ad::reshape(tape, emb, {1, 3 * emb.dim(1)});
    } else {
      window_input = ad::concat(tape,
                                {ad::slice(tape, emb, 0, 0, windows), ad::slice(tape, emb, 0, 1, windows + 1),
                                 ad::slice(tape, emb, 0, 2, windows + 2)},
                                1);
    }
    const Tensor states = lstm(tape, window_input, encoder.lstm, lstm_dropout);
    finals.push_back(ad::row(tape, states, windows - 1));
  }
  const Tensor out = linear(tape, ad::concat(tape, finals, 0), encoder.output);
  return nn::dropout(tape, out, dropout.output, dropout.rng);
}

BiaffineParams BiaffineParams::zeros(std::size_t dim, std::size_t classes, bool diagonal, bool include_affine) {
  BiaffineParams p;
  p.dim = dim;
  p.classes = classes;
  p.diagonal = diagonal;
  p.include_affine = include_affine;
  p.u = diagonal ? Tensor::zeros({classes, dim}, true) : Tensor::zeros({dim, classes, dim}, true);
  if (include_affine) {
    p.w = Tensor::zeros({classes, 2 * dim}, true);
    p.b = Tensor::zeros({classes}, true);
  }
  return p;
}

BiaffineParams BiaffineParams::random(std::size_t dim, std::size_t classes, bool diagonal, bool include_affine,
                                      Rng& rng) {
  BiaffineParams p = zeros(dim, classes, diagonal, include_affine);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const double scale = 1.0 / static_cast<double>(dim);
  for (auto& v : p.u.mutable_values()) v = dist(rng) * scale;
  if (include_affine) {
    for (auto& v : p.w.mutable_values()) v = dist(rng) * scale;
    for (auto& v : p.b.mutable_values()) v = dist(rng) * scale;
  }
  return p;
}

void BiaffineParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".u", u});
  if (include_affine) {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
}

namespace {

// T[i][b] = sum_a dep[i][a] U[a][k][b] (full) or dep[i][b] u[k][b] (diagonal).
void project_dep(std::span<const double> dep, std::size_t n, const BiaffineParams& p, std::size_t k,
                 std::vector<double>& t) {
  const std::size_t d = p.dim, c = p.classes;
  auto u = p.u.values();
  t.assign(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = dep.data() + i * d;
    double* out = t.data() + i * d;
    if (p.diagonal) {
      const double* uk = u.data() + k * d;
      for (std::size_t b = 0; b < d; ++b) out[b] = x[b] * uk[b];
    } else {
      for (std::size_t a = 0; a < d; ++a) {
        const double xa = x[a];
        if (xa == 0.0) continue;
        const double* urow = u.data() + (a * c + k) * d;
        for (std::size_t b = 0; b < d; ++b) out[b] += xa * urow[b];
      }
    }
  }
}

Tensor biaffine_impl(Tape& tape, const Tensor& dep, const Tensor& head, const BiaffineParams& p, bool affine) {
  if (dep.rank() != 2 || head.rank() != 2 || dep.dim(1) != p.dim || head.dim(1) != p.dim) {
    throw DimensionError("biaffine: inputs " + shape_string(dep.shape()) + " and " + shape_string(head.shape()) +
                         " for dimension " + std::to_string(p.dim));
  }
  const ad::Shape u_shape = p.diagonal ? ad::Shape{p.classes, p.dim} : ad::Shape{p.dim, p.classes, p.dim};
  if (p.u.shape() != u_shape) {
    throw DimensionError("biaffine: U has shape " + shape_string(p.u.shape()) + ", expected " + shape_string(u_shape));
  }
  if (affine && (!p.w || !p.b || p.w.shape() != ad::Shape{p.classes, 2 * p.dim} || p.b.size() != p.classes)) {
    throw DimensionError("biaffine: affine parameters missing or misshapen");
  }
  const std::size_t n = dep.dim(0), m = head.dim(0), d = p.dim, c = p.classes;
  auto dv = dep.values();
  auto hv = head.values();
  std::vector<double> out(n * m * c, 0.0);
  std::vector<double> t;
  for (std::size_t k = 0; k < c; ++k) {
    project_dep(dv, n, p, k, t);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0;
        for (std::size_t b = 0; b < d; ++b) s += t[i * d + b] * hv[j * d + b];
        out[(i * m + j) * c + k] = s;
      }
  }
  if (affine) {
    auto w = p.w.values();
    auto bias = p.b.values();
    for (std::size_t k = 0; k < c; ++k) {
      const double* wd = w.data() + k * 2 * d;
      const double* wh = wd + d;
      std::vector<double> dep_term(n), head_term(m);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) dep_term[i] += wd[a] * dv[i * d + a];
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t b = 0; b < d; ++b) head_term[j] += wh[b] * hv[j * d + b];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[(i * m + j) * c + k] += dep_term[i] + head_term[j] + bias[k];
    }
  }

  Tensor y({n, m, c}, std::move(out));
  std::vector<Tensor> inputs{dep, head, p.u};
  if (affine) {
    inputs.push_back(p.w);
    inputs.push_back(p.b);
  }
  tape.record(inputs, y, [dep, head, p, y, affine, n, m, d, c]() mutable {
    auto g = y.grad();
    auto dv = dep.values();
    auto hv = head.values();
    auto u = p.u.values();
    std::span<double> gdep = dep.requires_grad() ? dep.mutable_grad() : std::span<double>();
    std::span<double> ghead = head.requires_grad() ? head.mutable_grad() : std::span<double>();
    std::span<double> gu = p.u.requires_grad() ? p.u.mutable_grad() : std::span<double>();
    std::vector<double> t, dt(n * d);
    for (std::size_t k = 0; k < c; ++k) {
      // dT = G_k head
      std::fill(dt.begin(), dt.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double gij = g[(i * m + j) * c + k];
          if (gij == 0.0) continue;
          for (std::size_t b = 0; b < d; ++b) dt[i * d + b] += gij * hv[j * d + b];
        }
      if (!ghead.empty()) {
        project_dep(dv, n, p, k, t);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double gij = g[(i * m + j) * c + k];
            if (gij == 0.0) continue;
            for (std::size_t b = 0; b < d; ++b) ghead[j * d + b] += gij * t[i * d + b];
          }
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double* dti = dt.data() + i * d;
        const double* x = dv.data() + i * d;
        if (p.diagonal) {
          const double* uk = u.data() + k * d;
          for (std::size_t b = 0; b < d; ++b) {
            if (!gdep.empty()) gdep[i * d + b] += dti[b] * uk[b];
            if (!gu.empty()) gu[k * d + b] += x[b] * dti[b];
          }
        } else {
          for (std::size_t a = 0; a < d; ++a) {
            const double* urow = u.data() + (a * c + k) * d;
            if (!gdep.empty()) {
              double acc = 0;
              for (std::size_t b = 0; b < d; ++b) acc += dti[b] * urow[b];
              gdep[i * d + a] += acc;
            }
            if (!gu.empty() && x[a] != 0.0) {
              double* gurow = gu.data() + (a * c + k) * d;
              for (std::size_t b = 0; b < d; ++b) gurow[b] += x[a] * dti[b];
            }
          }
        }
      }
      if (affine) {
        auto w = p.w.values();
        std::vector<double> row_sum(n, 0.0), col_sum(m, 0.0);
        double total = 0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double gij = g[(i * m + j) * c + k];
            row_sum[i] += gij;
            col_sum[j] += gij;
            total += gij;
          }
        const double* wd = w.data() + k * 2 * d;
        const double* wh = wd + d;
        if (p.w.requires_grad()) {
          auto gw = p.w.mutable_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a < d; ++a) gw[k * 2 * d + a] += row_sum[i] * dv[i * d + a];
          for (std::size_t j = 0; j < m; ++j)
            for (std::size_t b = 0; b < d; ++b) gw[k * 2 * d + d + b] += col_sum[j] * hv[j * d + b];
        }
        if (p.b.requires_grad()) p.b.mutable_grad()[k] += total;
        if (!gdep.empty())
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a < d; ++a) gdep[i * d + a] += row_sum[i] * wd[a];
        if (!ghead.empty())
          for (std::size_t j = 0; j < m; ++j)
            for (std::size_t b = 0; b < d; ++b) ghead[j * d + b] += col_sum[j] * wh[b];
      }
    }
  });
  return y;
}

}  // namespace

Tensor biaffine(Tape& tape, const Tensor& dep, const Tensor& head, const BiaffineParams& params) {
  return biaffine_impl(tape, dep, head, params, params.include_affine);
}

Tensor bilinear(Tape& tape, const Tensor& dep, const Tensor& head, const BiaffineParams& params) {
  return biaffine_impl(tape, dep, head, params, false);
}

}  // namespace sdp::nn

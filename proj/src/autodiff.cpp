#include "sdp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sdp::ad {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  s_ = std::make_shared<Storage>();
  s_->shape = std::move(shape);
  s_->values = std::move(values);
  s_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_size(shape), value);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_string(shape()));
  return s_->values[0];
}

std::span<double> Tensor::mutable_grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->values.size(), 0.0);
  return s_->grad;
}

void Tensor::zero_grad() const { s_->grad.assign(s_->values.size(), 0.0); }

Tensor Tensor::clone() const { return Tensor(shape(), std::vector<double>(values().begin(), values().end()), requires_grad()); }

bool Tape::record(std::vector<Tensor> inputs, Tensor& output, BackwardRule rule) {
  const bool any =
      recording_ && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  output.set_requires_grad(any);
  if (!any) return false;
  nodes_.push_back(Node{std::move(inputs), output, std::move(rule)});
  return true;
}

bool Tape::contains(const Tensor& t) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.output.same(t); });
}

void Tape::backward(const Tensor& loss) {
  if (!loss) throw std::invalid_argument("backward: null loss");
  if (loss.size() != 1) throw DimensionError("backward: loss must be scalar, got " + shape_string(loss.shape()));
  if (!contains(loss)) throw std::invalid_argument("backward: loss was not produced on this tape");
  Tensor seed = loss;
  seed.mutable_grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->rule();
  }
}

namespace {

// Returns the number of elements of `b` when it broadcasts over `a` by
// trailing dimensions, or throws.
std::size_t broadcast_inner(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& as = a.shape();
  Shape bs = b.shape();
  while (bs.size() > 1 && bs.front() == 1) bs.erase(bs.begin());
  if (as == b.shape()) return a.size();
  bool ok = bs.size() <= as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin());
  if (!ok) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) + " over " +
                         shape_string(as));
  }
  return b.size();
}

Tensor unary(Tape& tape, const Tensor& a, double (*f)(double), double (*df)(double x, double y)) {
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  Tensor y(a.shape(), std::move(out));
  tape.record({a}, y, [a, y, df]() mutable {
    if (!a.requires_grad()) return;
    auto g = y.grad();
    auto ga = a.mutable_grad();
    auto av = a.values();
    auto yv = y.values();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * df(av[i], yv[i]);
  });
  return y;
}

double sigmoid_fn(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_present(const Tensor& t, const char* op) {
  if (!t) throw std::invalid_argument(std::string(op) + ": missing operand");
}

}  // namespace

Tensor elementwise(Tape& tape, ElementwiseOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case ElementwiseOp::kAdd: return add(tape, a, b);
    case ElementwiseOp::kMultiply: return mul(tape, a, b);
    case ElementwiseOp::kSigmoid: return sigmoid(tape, a);
    case ElementwiseOp::kTanh: return tanh(tape, a);
    case ElementwiseOp::kRelu: return relu(tape, a);
    case ElementwiseOp::kIdentity: return a;
  }
  throw std::invalid_argument("elementwise: unknown op kind " + std::to_string(static_cast<int>(op)));
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  check_present(a, "add");
  check_present(b, "add");
  const std::size_t inner = broadcast_inner(a, b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
  Tensor y(a.shape(), std::move(out));
  tape.record({a, b}, y, [a, b, y, inner]() mutable {
    auto g = y.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i];
    }
  });
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_present(a, "mul");
  check_present(b, "mul");
  const std::size_t inner = broadcast_inner(a, b, "mul");
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i % inner];
  Tensor y(a.shape(), std::move(out));
  tape.record({a, b}, y, [a, b, y, inner]() mutable {
    auto g = y.grad();
    auto av = a.values();
    auto bv = b.values();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i % inner];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i] * av[i];
    }
  });
  return y;
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(tape, a, sigmoid_fn, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary(tape, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(Tape& tape, const Tensor& a) {
  return unary(tape, a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  Tensor y(a.shape(), std::move(out));
  tape.record({a}, y, [a, y, factor]() mutable {
    auto g = y.grad();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
  return y;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0;
  for (double v : a.values()) total += v;
  Tensor y = Tensor::scalar(total);
  tape.record({a}, y, [a, y]() mutable {
    const double g = y.grad()[0];
    for (double& ga : a.mutable_grad()) ga += g;
  });
  return y;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  Tensor y({m, n}, std::move(out));
  tape.record({a, b}, y, [a, b, y, m, k, n]() mutable {
    auto g = y.grad();
    auto av = a.values();
    auto bv = b.values();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = bv.data() + p * n;
          double acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av[i * k + p];
          if (x == 0.0) continue;
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
        }
      }
    }
  });
  return y;
}

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  if (parts.size() == 1) return parts[0];
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: incompatible shapes " + shape_string(first) + " and " + shape_string(s) +
                           " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_block = out_shape[axis] * inner;

  std::vector<double> out(shape_size(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t block = p.dim(axis) * inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * block, block, out.data() + o * out_block + offset);
    }
    offset += block;
  }
  Tensor y(out_shape, std::move(out));
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  tape.record(inputs, y, [inputs, y, offsets, outer, inner, out_block, axis]() mutable {
    auto g = y.grad();
    for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
      Tensor& p = inputs[idx];
      if (!p.requires_grad()) continue;
      const std::size_t block = p.dim(axis) * inner;
      auto gp = p.mutable_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = g.data() + o * out_block + offsets[idx];
        double* dst = gp.data() + o * block;
        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
      }
    }
  });
  return y;
}

Tensor concat(Tape& tape, std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(tape, std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(Tape& tape, const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.rank() || begin >= end || end > a.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " invalid for " + shape_string(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t in_block = a.dim(axis) * inner;
  const std::size_t out_block = (end - begin) * inner;
  const std::size_t start = begin * inner;
  std::vector<double> out(outer * out_block);
  auto av = a.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.data() + o * in_block + start, out_block, out.data() + o * out_block);
  }
  Tensor y(out_shape, std::move(out));
  tape.record({a}, y, [a, y, outer, in_block, out_block, start]() mutable {
    auto g = y.grad();
    auto ga = a.mutable_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < out_block; ++i) ga[o * in_block + start + i] += g[o * out_block + i];
    }
  });
  return y;
}

Tensor row(Tape& tape, const Tensor& a, std::size_t index) { return slice(tape, a, 0, index, index + 1); }

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  Tensor y(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()));
  tape.record({a}, y, [a, y]() mutable {
    auto g = y.grad();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return y;
}

Tensor swap_leading_axes(Tape& tape, const Tensor& a) {
  if (a.rank() != 2 && a.rank() != 3) {
    throw DimensionError("swap_leading_axes: rank 2 or 3 required, got " + shape_string(a.shape()));
  }
  const std::size_t n0 = a.dim(0), n1 = a.dim(1), inner = a.rank() == 3 ? a.dim(2) : 1;
  Shape out_shape = a.shape();
  std::swap(out_shape[0], out_shape[1]);
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      std::copy_n(av.data() + (i * n1 + j) * inner, inner, out.data() + (j * n0 + i) * inner);
  Tensor y(out_shape, std::move(out));
  tape.record({a}, y, [a, y, n0, n1, inner]() mutable {
    auto g = y.grad();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < n0; ++i)
      for (std::size_t j = 0; j < n1; ++j)
        for (std::size_t k = 0; k < inner; ++k) ga[(i * n1 + j) * inner + k] += g[(j * n0 + i) * inner + k];
  });
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be rank 2, got " + shape_string(table.shape()));
  if (ids.empty()) throw DimensionError("gather_rows: empty id sequence");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " >= table rows " + std::to_string(rows));
    }
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + i * d);
  }
  Tensor y({ids.size(), d}, std::move(out));
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  tape.record({table}, y, [table, y, idv = std::move(idv), d]() mutable {
    auto g = y.grad();
    auto gt = table.mutable_grad();
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[idv[i] * d + j] += g[i * d + j];
  });
  return y;
}

Tensor replace_rows(Tape& tape, const Tensor& a, const std::vector<bool>& mask, const Tensor& replacement) {
  if (a.rank() != 2 || mask.size() != a.dim(0) || replacement.size() != a.dim(1)) {
    throw DimensionError("replace_rows: " + shape_string(a.shape()) + " with mask of " + std::to_string(mask.size()) +
                         " and replacement " + shape_string(replacement.shape()));
  }
  if (std::none_of(mask.begin(), mask.end(), [](bool m) { return m; })) return a;
  const std::size_t n = a.dim(0), d = a.dim(1);
  std::vector<double> out(a.values().begin(), a.values().end());
  auto rv = replacement.values();
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i]) std::copy_n(rv.data(), d, out.data() + i * d);
  Tensor y(a.shape(), std::move(out));
  tape.record({a, replacement}, y, [a, replacement, y, mask, n, d]() mutable {
    auto g = y.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < n; ++i)
        if (!mask[i])
          for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[i * d + j];
    }
    if (replacement.requires_grad()) {
      auto gr = replacement.mutable_grad();
      for (std::size_t i = 0; i < n; ++i)
        if (mask[i])
          for (std::size_t j = 0; j < d; ++j) gr[j] += g[i * d + j];
    }
  });
  return y;
}

Tensor softmax_xent(Tape& tape, const Tensor& logits, std::span<const std::size_t> gold,
                    const std::vector<bool>& mask) {
  if (logits.rank() != 2 || gold.size() != logits.dim(0) || mask.size() != logits.dim(0)) {
    throw DimensionError("softmax_xent: logits " + shape_string(logits.shape()) + " with " +
                         std::to_string(gold.size()) + " gold indices and " + std::to_string(mask.size()) +
                         " mask entries");
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  auto lv = logits.values();
  std::vector<double> probs(n * c, 0.0);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (gold[i] >= c) {
      throw std::out_of_range("softmax_xent: gold index " + std::to_string(gold[i]) + " out of range for " +
                              std::to_string(c) + " classes");
    }
    const double* r = lv.data() + i * c;
    const double mx = *std::max_element(r, r + c);
    double z = 0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(r[k] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t k = 0; k < c; ++k) probs[i * c + k] = std::exp(r[k] - log_z);
    total += log_z - r[gold[i]];
    ++count;
  }
  Tensor y = Tensor::scalar(count ? total / static_cast<double>(count) : 0.0);
  std::vector<std::size_t> goldv(gold.begin(), gold.end());
  tape.record({logits}, y, [logits, y, probs = std::move(probs), goldv = std::move(goldv), mask, n, c, count]() mutable {
    auto gl = logits.mutable_grad();
    if (count == 0) return;
    const double g = y.grad()[0] / static_cast<double>(count);
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      for (std::size_t k = 0; k < c; ++k) gl[i * c + k] += g * (probs[i * c + k] - (k == goldv[i] ? 1.0 : 0.0));
    }
  });
  return y;
}

Tensor sigmoid_xent(Tape& tape, const Tensor& logits, const Tensor& gold, const Tensor& mask) {
  if (gold.shape() != logits.shape() || mask.shape() != logits.shape()) {
    throw DimensionError("sigmoid_xent: logits " + shape_string(logits.shape()) + ", gold " +
                         shape_string(gold.shape()) + ", mask " + shape_string(mask.shape()));
  }
  auto sv = logits.values();
  auto yv = gold.values();
  auto mv = mask.values();
  double total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sv.size(); ++i) {
    if (yv[i] != 0.0 && yv[i] != 1.0) {
      throw std::invalid_argument("sigmoid_xent: gold value " + std::to_string(yv[i]) + " not in {0,1}");
    }
    if (mv[i] == 0.0) continue;
    const double s = sv[i];
    total += std::max(s, 0.0) - s * yv[i] + std::log1p(std::exp(-std::abs(s)));
    ++count;
  }
  Tensor y = Tensor::scalar(count ? total / static_cast<double>(count) : 0.0);
  tape.record({logits}, y, [logits, gold, mask, y, count]() mutable {
    auto gl = logits.mutable_grad();
    if (count == 0) return;
    const double g = y.grad()[0] / static_cast<double>(count);
    auto sv = logits.values();
    auto yv = gold.values();
    auto mv = mask.values();
    for (std::size_t i = 0; i < sv.size(); ++i) {
      if (mv[i] == 0.0) continue;
      gl[i] += g * (sigmoid_fn(sv[i]) - yv[i]);
    }
  });
  return y;
}

}  // namespace sdp::ad

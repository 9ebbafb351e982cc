#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// tensors of 64-bit floats. Operations are free functions that compute
// their result eagerly and, when any input requires a gradient, record a
// backward rule on the tape passed to them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdp::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Reference-counted handle. Copies alias the same storage, which is how
// parameters are shared between a model and the tapes built over it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  explicit operator bool() const { return static_cast<bool>(s_); }
  bool same(const Tensor& other) const { return s_ == other.s_; }

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t size() const { return s_->values.size(); }

  std::span<const double> values() const { return s_->values; }
  std::span<double> mutable_values() const { return s_->values; }
  double operator[](std::size_t i) const { return s_->values[i]; }
  double item() const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) const { s_->requires_grad = on; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  // Allocates a zero gradient on first use.
  std::span<double> mutable_grad() const;
  void zero_grad() const;
  void clear_grad() const { s_->grad.clear(); }

  // Deep copy without gradient.
  Tensor clone() const;

 private:
  struct Storage {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

class Tape {
 public:
  using BackwardRule = std::function<void()>;

  // A non-recording tape computes forward values only (inference).
  explicit Tape(bool recording = true) : recording_(recording) {}
  bool recording() const { return recording_; }

  // Records an operation. Returns false (and records nothing) when no input
  // requires a gradient; the output's requires_grad flag is set to match.
  bool record(std::vector<Tensor> inputs, Tensor& output, BackwardRule rule);

  bool contains(const Tensor& t) const;
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the rules in reverse order.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardRule rule;
  };
  std::vector<Node> nodes_;
  bool recording_ = true;
};

inline void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

enum class ElementwiseOp : std::uint8_t { kAdd, kMultiply, kSigmoid, kTanh, kRelu, kIdentity };

// Binary kinds need `b`; `b` may broadcast over `a` by trailing dimensions
// (leading unit dimensions of `b` are ignored).
Tensor elementwise(Tape& tape, ElementwiseOp op, const Tensor& a, const Tensor& b = {});

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);
Tensor relu(Tape& tape, const Tensor& a);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor sum(Tape& tape, const Tensor& a);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis);
Tensor concat(Tape& tape, std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice(Tape& tape, const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor row(Tape& tape, const Tensor& a, std::size_t index);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);
// Swaps axes 0 and 1 of a rank-2 or rank-3 tensor.
Tensor swap_leading_axes(Tape& tape, const Tensor& a);

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> ids);
// Row i of the result is `replacement` (1×d) where mask[i], else a[i].
Tensor replace_rows(Tape& tape, const Tensor& a, const std::vector<bool>& mask,
                    const Tensor& replacement);

// Mean negative log-softmax probability of `gold` over rows with mask set.
// Masked-out rows contribute neither loss nor gradient; no rows gives 0.
Tensor softmax_xent(Tape& tape, const Tensor& logits, std::span<const std::size_t> gold,
                    const std::vector<bool>& mask);

// Mean binary cross-entropy over cells whose mask is 1, computed as
// max(s,0) - s*y + log(1 + exp(-|s|)).
Tensor sigmoid_xent(Tape& tape, const Tensor& logits, const Tensor& gold, const Tensor& mask);

}  // namespace sdp::ad

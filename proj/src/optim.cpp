#include "sdp/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sdp::ad {

AdamState AdamState::for_params(std::span<const Tensor> params) {
  AdamState state;
  for (const auto& p : params) {
    state.first_moment.push_back(Tensor::zeros(p.shape()));
    state.second_moment.push_back(Tensor::zeros(p.shape()));
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: state holds " + std::to_string(state.first_moment.size()) +
                         " moments for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw std::invalid_argument("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.first_moment[i].shape() != params[i].shape() || state.second_moment[i].shape() != params[i].shape()) {
      throw DimensionError("adam_step: moment shape mismatch for parameter " + std::to_string(i) + " " +
                           shape_string(params[i].shape()));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(options.beta1, t);
  const double bias2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_values();
    auto g = params[i].grad();
    auto m = state.first_moment[i].mutable_values();
    auto v = state.second_moment[i].mutable_values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double grad = g[j] + options.l2 * p[j];
      m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * grad;
      v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * grad * grad;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      p[j] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
  }
}

}  // namespace sdp::ad

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ftn/errors.hpp"

namespace ftn {

// Bias-corrected Adam with no weight decay. Moments are all-zero iff
// step_count == 0, which adam_reset restores at every task boundary;
// carrying moments across a boundary would keep drifting parameters
// whose gradients are exactly zero under the current mask.
struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step_count = 0;
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState(std::size_t n, double learning_rate)
      : first_moment(n, 0.0), second_moment(n, 0.0), lr(learning_rate) {}

  std::size_t size() const { return first_moment.size(); }
};

inline void adam_step(AdamState& state, std::span<double> param,
                      std::span<const double> grad) {
  if (param.size() != state.size() || grad.size() != state.size()) {
    throw config_error("adam_step: parameter/gradient shape mismatch");
  }
  state.step_count += 1;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step_count));
  const std::size_t n = param.size();
  for (std::size_t i = 0; i < n; ++i) {
    double g = grad[i];
    double m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
    double v =
        state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
    state.first_moment[i] = m;
    state.second_moment[i] = v;
    param[i] -= state.lr * (m / c1) / (std::sqrt(v / c2) + state.eps);
  }
}

inline void adam_reset(AdamState& state) {
  std::fill(state.first_moment.begin(), state.first_moment.end(), 0.0);
  std::fill(state.second_moment.begin(), state.second_moment.end(), 0.0);
  state.step_count = 0;
}

}  // namespace ftn

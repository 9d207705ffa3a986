#pragma once

#include <span>
#include <string>
#include <vector>

namespace ftn {

enum class LossKind { cross_entropy, mse };

std::string to_string(LossKind kind);

// Targets for one batch; `classes` is used for cross-entropy (one integer
// label per sample), `values` for MSE (batch * d_out reals).
struct Targets {
  std::vector<int> classes;
  std::vector<double> values;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // [batch, d_out], gradient of the mean loss
};

// Mean-over-batch loss and its gradient w.r.t. the predictions.
// Cross-entropy expects logits and integer class targets in [0, d_out);
// out-of-range targets raise data_error. MSE expects real targets.
LossGrad loss_and_grad(LossKind kind, std::span<const double> predictions,
                       int batch, int d_out, const Targets& targets);

// Per-sample log-likelihood gradients used by the Fisher estimator:
// cross-entropy rows are softmax - onehot(true class), MSE rows are
// 2 * (prediction - target). No batch normalization.
std::vector<double> loglik_grad_per_sample(LossKind kind,
                                           std::span<const double> predictions,
                                           int batch, int d_out,
                                           const Targets& targets);

}  // namespace ftn

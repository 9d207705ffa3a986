#include "ftn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "ftn/errors.hpp"

namespace ftn {

std::string to_string(LossKind kind) {
  return kind == LossKind::cross_entropy ? "cross-entropy" : "mse";
}

static void check_shapes(LossKind kind, std::span<const double> predictions,
                         int batch, int d_out, const Targets& targets) {
  if (batch < 1) throw config_error("loss: batch must be >= 1");
  if (predictions.size() != static_cast<std::size_t>(batch) * d_out) {
    throw config_error("loss: prediction shape mismatch");
  }
  if (kind == LossKind::cross_entropy) {
    if (targets.classes.size() != static_cast<std::size_t>(batch)) {
      throw config_error("loss: class target count mismatch");
    }
    for (int y : targets.classes) {
      if (y < 0 || y >= d_out) {
        throw data_error("loss: class target " + std::to_string(y) +
                         " out of range [0, " + std::to_string(d_out) + ")");
      }
    }
  } else {
    if (targets.values.size() != static_cast<std::size_t>(batch) * d_out) {
      throw config_error("loss: value target shape mismatch");
    }
  }
}

LossGrad loss_and_grad(LossKind kind, std::span<const double> predictions,
                       int batch, int d_out, const Targets& targets) {
  check_shapes(kind, predictions, batch, d_out, targets);
  LossGrad out;
  out.grad.assign(predictions.size(), 0.0);
  const double inv_b = 1.0 / batch;

  if (kind == LossKind::cross_entropy) {
    for (int b = 0; b < batch; ++b) {
      const double* logit = predictions.data() + std::size_t(b) * d_out;
      double* g = out.grad.data() + std::size_t(b) * d_out;
      double mx = *std::max_element(logit, logit + d_out);
      double sum = 0.0;
      for (int i = 0; i < d_out; ++i) sum += std::exp(logit[i] - mx);
      double lse = mx + std::log(sum);
      int y = targets.classes[b];
      out.loss += (lse - logit[y]) * inv_b;
      for (int i = 0; i < d_out; ++i) {
        g[i] = std::exp(logit[i] - lse) * inv_b;
      }
      g[y] -= inv_b;
    }
  } else {
    const double scale = 1.0 / (double(batch) * d_out);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      double d = predictions[i] - targets.values[i];
      out.loss += d * d * scale;
      out.grad[i] = 2.0 * d * scale;
    }
  }
  return out;
}

std::vector<double> loglik_grad_per_sample(LossKind kind,
                                           std::span<const double> predictions,
                                           int batch, int d_out,
                                           const Targets& targets) {
  check_shapes(kind, predictions, batch, d_out, targets);
  std::vector<double> grad(predictions.size(), 0.0);
  if (kind == LossKind::cross_entropy) {
    for (int b = 0; b < batch; ++b) {
      const double* logit = predictions.data() + std::size_t(b) * d_out;
      double* g = grad.data() + std::size_t(b) * d_out;
      double mx = *std::max_element(logit, logit + d_out);
      double sum = 0.0;
      for (int i = 0; i < d_out; ++i) sum += std::exp(logit[i] - mx);
      double lse = mx + std::log(sum);
      for (int i = 0; i < d_out; ++i) g[i] = std::exp(logit[i] - lse);
      g[targets.classes[b]] -= 1.0;
    }
  } else {
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      grad[i] = 2.0 * (predictions[i] - targets.values[i]);
    }
  }
  return grad;
}

}  // namespace ftn

#pragma once

#include <string>
#include <vector>

#include "ftn/grid.hpp"
#include "ftn/loss.hpp"
#include "ftn/model.hpp"

namespace ftn {

// Frozen snapshot of the parameters at the end of one task plus the
// diagonal Fisher estimate around them. Immutable once built; one anchor
// per completed task, penalties summed across anchors.
struct EwcAnchor {
  int task_index = -1;
  double lambda = 0.0;
  std::vector<double> anchor;  // theta* in NeuronBank layout
  std::vector<double> fisher;  // elementwise >= 0, zero on inactive slices
};

// One pre-drawn batch for the Fisher pass.
struct SampleBatch {
  std::vector<double> x;  // [batch, d_in]
  Targets targets;
  int batch = 0;
};

// Diagonal Fisher: mean over all samples of the squared per-parameter
// gradient of the per-sample log-likelihood (cross-entropy: log-prob of
// the true class; MSE: Gaussian log-likelihood). Evaluated with dropout
// off under `mask`; slices behind closed gates get exactly zero.
EwcAnchor estimate_fisher(const NeuronBank& model,
                          const std::vector<SampleBatch>& sample,
                          LossKind kind, const Mask& mask, int task_index,
                          double lambda);

struct PenaltyGrad {
  std::vector<double> grad;  // empty when no anchor contributes
  double penalty = 0.0;
};

// penalty = sum over anchors of (lambda/2) * sum_i fisher_i (theta_i - theta*_i)^2,
// grad_i = sum over anchors of lambda * fisher_i * (theta_i - theta*_i).
// Anchors with lambda == 0 are skipped entirely so a zero-lambda run stays
// bit-identical to one with no penalty hook at all.
PenaltyGrad ewc_penalty_grad(const NeuronBank& model,
                             const std::vector<EwcAnchor>& anchors);

// Anchor files use the checkpoint tensor conventions: little-endian,
// magic "FTNA", then task index, element count, lambda, theta*, fisher.
void save_anchor(const EwcAnchor& anchor, const std::string& path);
EwcAnchor load_anchor(const std::string& path);

}  // namespace ftn

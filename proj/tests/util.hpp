#pragma once

// Shared helpers for gradient checks: independent finite-difference
// oracles and bitwise comparisons used by both the unit tests and the
// acceptance suite.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "ftn/loss.hpp"
#include "ftn/model.hpp"
#include "ftn/rng.hpp"

namespace testutil {

inline bool bits_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() &&
         (a.empty() ||
          std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline double max_rel_err(std::span<const double> a,
                          std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double denom = std::max({1e-2, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline std::vector<double> sigmoid(std::span<const double> logits) {
  std::vector<double> g(logits.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  }
  return g;
}

// Deterministic scalar loss of (model params, mask logits) via the relaxed
// eval-mode forward; the common objective for finite-difference checks.
inline double loss_of(const ftn::NeuronBank& model,
                      std::span<const double> x, int batch,
                      std::span<const double> logits, ftn::LossKind kind,
                      const ftn::Targets& targets) {
  ftn::ForwardCache cache;
  auto gates = sigmoid(logits);
  auto y = ftn::forward(model, x, batch, gates, ftn::RunMode::eval, nullptr,
                        cache);
  return ftn::loss_and_grad(kind, y, batch, model.grid.d_out, targets).loss;
}

struct FdReport {
  double worst_param = 0.0;
  double worst_logit = 0.0;
};

// Central differences over every parameter and every mask logit.
inline FdReport fd_check(ftn::NeuronBank& model, std::span<const double> x,
                         int batch, std::vector<double> logits,
                         ftn::LossKind kind, const ftn::Targets& targets,
                         double h = 1e-5) {
  ftn::ForwardCache cache;
  auto gates = sigmoid(logits);
  auto y = ftn::forward(model, x, batch, gates, ftn::RunMode::eval, nullptr,
                        cache);
  auto lg = ftn::loss_and_grad(kind, y, batch, model.grid.d_out, targets);
  auto an = ftn::backward(model, cache, lg.grad);

  std::vector<double> fd_params(model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    double keep = model.params[i];
    model.params[i] = keep + h;
    double up = loss_of(model, x, batch, logits, kind, targets);
    model.params[i] = keep - h;
    double dn = loss_of(model, x, batch, logits, kind, targets);
    model.params[i] = keep;
    fd_params[i] = (up - dn) / (2.0 * h);
  }
  std::vector<double> fd_logits(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double keep = logits[i];
    logits[i] = keep + h;
    double up = loss_of(model, x, batch, logits, kind, targets);
    logits[i] = keep - h;
    double dn = loss_of(model, x, batch, logits, kind, targets);
    logits[i] = keep;
    fd_logits[i] = (up - dn) / (2.0 * h);
  }
  FdReport rep;
  rep.worst_param = max_rel_err(an.params, fd_params);
  rep.worst_logit = max_rel_err(an.mask_logits, fd_logits);
  return rep;
}

}  // namespace testutil

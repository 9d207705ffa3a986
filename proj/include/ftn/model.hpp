#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ftn/adam.hpp"
#include "ftn/grid.hpp"
#include "ftn/loss.hpp"
#include "ftn/rng.hpp"

namespace ftn {

// Bank of `neurons` independent MLPs plus the shared linear readout, all
// parameters in one flat buffer in declaration order:
//   input weights  [H, inner, d_in]   input biases  [H, inner]
//   hidden weights [H, layers-1, inner, inner]
//   hidden biases  [H, layers-1, inner]
//   head weights   [H, inner]         head biases   [H]
//   readout        [d_out, H]         (no readout bias)
// Neuron k's private parameters are the k-th slice of each tensor; the
// readout is the only tensor shared across neurons, with column k tied to
// neuron k's scalar output. A bias on the readout would be shared state
// across masks and would break the isolation guarantee, so there is none.
struct NeuronBank {
  GridSpec grid;
  std::vector<double> params;
  std::uint64_t revision = 0;  // bumped on every parameter mutation

  std::size_t w_in_off = 0, b_in_off = 0, w_hid_off = 0, b_hid_off = 0,
              w_head_off = 0, b_head_off = 0, w_out_off = 0;

  static NeuronBank with_layout(const GridSpec& grid);

  std::size_t size() const { return params.size(); }

  // Per-neuron slice sizes (elements).
  std::size_t w_in_len() const {
    return std::size_t(grid.inner) * grid.d_in;
  }
  std::size_t w_hid_len() const {
    return std::size_t(grid.layers - 1) * grid.inner * grid.inner;
  }
  std::size_t b_hid_len() const {
    return std::size_t(grid.layers - 1) * grid.inner;
  }

  std::span<const double> w_in(int k) const {
    return {params.data() + w_in_off + k * w_in_len(), w_in_len()};
  }
  std::span<const double> b_in(int k) const {
    return {params.data() + b_in_off + std::size_t(k) * grid.inner,
            std::size_t(grid.inner)};
  }
  std::span<const double> w_hid(int k) const {
    return {params.data() + w_hid_off + k * w_hid_len(), w_hid_len()};
  }
  std::span<const double> b_hid(int k) const {
    return {params.data() + b_hid_off + k * b_hid_len(), b_hid_len()};
  }
  std::span<const double> w_head(int k) const {
    return {params.data() + w_head_off + std::size_t(k) * grid.inner,
            std::size_t(grid.inner)};
  }
  double b_head(int k) const { return params[b_head_off + k]; }
  // Readout column k is strided by `neurons`.
  double w_out(int row, int k) const {
    return params[w_out_off + std::size_t(row) * grid.neurons + k];
  }
};

// Weights uniform in +/- sqrt(1/fan_in) per layer, biases zero,
// deterministic per stream.
NeuronBank init_model(const GridSpec& grid, RngStream& rng);

enum class RunMode { train, eval };

// Activations and gate state kept for the backward pass. Reusable across
// steps; forward() resizes as needed.
struct ForwardCache {
  int batch = 0;
  RunMode mode = RunMode::eval;
  std::uint64_t model_revision = 0;
  bool valid = false;
  std::vector<double> input;             // [batch, d_in]
  std::vector<std::vector<double>> act;  // per layer, [H*inner, batch] col-major
  std::vector<double> outputs;           // neuron scalars z, [batch, H]
  std::vector<double> drop;              // inverted-dropout multipliers, [batch, H]; empty in eval
  std::vector<double> gates;             // [H], real-valued
};

struct Gradients {
  std::vector<double> params;       // same layout as NeuronBank::params
  std::vector<double> mask_logits;  // [H]
};

// Masked forward pass: y = readout((dropout(z) if train) * gates).
// `gates` may be any real vector in [0, 1]; binary masks are the special
// case and the configurer's relaxed pass uses sigmoid(logits). Train mode
// applies inverted dropout using `dropout_rng`; eval mode is deterministic.
std::vector<double> forward(const NeuronBank& model, std::span<const double> x,
                            int batch, std::span<const double> gates,
                            RunMode mode, RngStream* dropout_rng,
                            ForwardCache& cache);

// Analytic gradients for every parameter tensor and for the mask logits
// (d loss / d gate * gate * (1 - gate), i.e. through sigma when gates came
// from sigmoid(logits)). With `accumulate_squares` the weight and bias
// accumulations sum squared per-sample contributions instead, which is what
// the diagonal Fisher estimate needs; the returned mask_logits are zero in
// that mode.
Gradients backward(const NeuronBank& model, const ForwardCache& cache,
                   std::span<const double> d_loss_d_y,
                   bool accumulate_squares = false);

// Neuron scalars only, eval mode, chunked internally: Z as [batch, H].
// This is the expensive part of evaluation and of the configurer probe;
// readout_with_gates() then applies any number of masks cheaply.
std::vector<double> neuron_outputs(const NeuronBank& model,
                                   std::span<const double> x, int batch);

// y = W_out (z * gates) for precomputed neuron scalars.
std::vector<double> readout_with_gates(const NeuronBank& model,
                                       std::span<const double> z, int batch,
                                       std::span<const double> gates);

// One forward/backward/Adam step on the model weights under a frozen
// binary mask. Mask logits are untouched. Returns the batch loss.
// `extra_param_grad`, when non-null, is added to the loss gradient before
// the Adam step (EWC penalty hook).
double train_step(NeuronBank& model, std::span<const double> x, int batch,
                  const Targets& targets, LossKind kind, const Mask& mask,
                  AdamState& opt, RngStream& dropout_rng, ForwardCache& cache,
                  std::span<const double> extra_param_grad = {});

// Order-stable SHA-256 over the selected neurons' private slices and their
// readout columns. `neuron_set` entries are indices in [0, H).
std::string param_fingerprint(const NeuronBank& model,
                              std::span<const int> neuron_set);

// Little-endian checkpoint: magic "FTN1", then uint32 side, neurons,
// layers, inner, d_in, d_out, then the parameter tensors in declaration
// order as binary64. Round-trips bit-exactly. `winners` and `dropout_p`
// are run configuration, not model state, and are supplied on load.
void save_checkpoint(const NeuronBank& model, const std::string& path);
NeuronBank load_checkpoint(const std::string& path, int winners = 1,
                           double dropout_p = 0.0);

}  // namespace ftn

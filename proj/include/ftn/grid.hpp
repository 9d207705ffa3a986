#pragma once

#include <string>
#include <vector>

#include "ftn/errors.hpp"

namespace ftn {

// Geometry and capacity of the neuron grid. `neurons` must equal
// side * side; `winners` is the KWTA budget per task.
struct GridSpec {
  int side = 32;
  int neurons = 1024;
  int winners = 128;
  int d_in = 2;
  int d_out = 2;
  int layers = 8;  // hidden layers per neuron; layers+1 weight matrices
  int inner = 8;   // hidden width per neuron
  double dropout_p = 0.2;

  void validate() const {
    if (side < 1 || neurons != side * side) {
      throw config_error("grid: neurons must equal side^2");
    }
    if (winners < 1 || winners > neurons) {
      throw config_error("grid: winners must be in [1, neurons]");
    }
    if (d_in < 1 || d_out < 1 || layers < 1 || inner < 1) {
      throw config_error("grid: dimensions must be positive");
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
      throw config_error("grid: dropout_p must be in [0, 1)");
    }
  }
};

enum class MaskProvenance { configured, fixed_block, single_block, all_ones };

std::string to_string(MaskProvenance p);

// Binary routing mask over the grid. `gates` holds exactly 0.0/1.0;
// `logits` is the real field the binarizer saw (post-smoothing), empty
// for static masks. The relaxed forward pass used inside the configurer
// passes sigmoid(logits) to forward() directly and never materializes a
// Mask.
struct Mask {
  std::vector<double> logits;
  std::vector<double> gates;
  MaskProvenance provenance = MaskProvenance::configured;
  int task_index = -1;  // set for fixed_block provenance
  int side = 0;

  int active_count() const {
    int n = 0;
    for (double g : gates) n += (g != 0.0);
    return n;
  }
};

}  // namespace ftn

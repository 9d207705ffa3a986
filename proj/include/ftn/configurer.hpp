#pragma once

#include <span>
#include <string>
#include <vector>

#include "ftn/grid.hpp"
#include "ftn/loss.hpp"
#include "ftn/model.hpp"

namespace ftn {

// The variant table. Adaptive variants run the three-stage configurer
// (with different smoothing budgets); the static ones derive masks from
// the task index alone. ewc trains the same shared block as no_mask but
// adds the quadratic anchor penalty.
enum class Variant {
  ftn_fast,   // s=17, T=2
  ftn_slow,   // s=3,  T=15
  kwta_only,  // T=0 (no smoothing)
  fixed_mask,
  no_mask,
  all_ones,
  ewc,
};

enum class Schedule { per_batch, per_epoch };

std::string to_string(Variant v);
std::string to_string(Schedule s);
Variant parse_variant(const std::string& name);      // config_error on unknown
Schedule parse_schedule(const std::string& name);    // config_error on unknown

inline bool is_adaptive(Variant v) {
  return v == Variant::ftn_fast || v == Variant::ftn_slow ||
         v == Variant::kwta_only;
}

struct ConfigurerSpec {
  Variant variant = Variant::ftn_slow;
  int kernel_s = 3;      // odd; 17 for ftn_fast, 3 for ftn_slow
  int lateral_t = 15;    // smoothing passes; 0 disables smoothing
  int reconfig_steps = 10;   // S: Adam steps on the relaxed logits
  double reconfig_lr = 0.2;  // eta_m
  int winners = 128;         // k
  Schedule schedule = Schedule::per_epoch;

  void validate() const {
    if (kernel_s < 1 || kernel_s % 2 == 0) {
      throw config_error("configurer: kernel side must be odd and >= 1");
    }
    if (lateral_t < 0) throw config_error("configurer: passes must be >= 0");
    if (reconfig_steps < 0) {
      throw config_error("configurer: reconfig steps must be >= 0");
    }
    if (winners < 1) throw config_error("configurer: winners must be >= 1");
  }
};

// Table defaults for a variant: kernel geometry is fixed per variant,
// schedule and step/lr budgets come from the experiment preset.
ConfigurerSpec spec_for(Variant v, int winners, int reconfig_steps,
                        double reconfig_lr, Schedule schedule);

// T passes of a uniform s x s convolution with torus wrap-around
// (kernel normalized by 1/s^2). s may exceed the grid side; indices wrap
// with multiplicity. Summation order is fixed so the operation commutes
// bitwise with circular shifts.
std::vector<double> lateral_smooth(std::span<const double> field, int side,
                                   int s, int passes);

// Binary vector with ones at the k largest values; ties break toward the
// lowest flat index. Invariant under strictly increasing transforms.
std::vector<double> kwta(std::span<const double> values, int k);

// Masks that need no data: fixed_block gives task t the flat index range
// [t*k, (t+1)*k) and fails with capacity_error when the grid is full;
// no_mask and ewc always reuse [0, k); all_ones opens every gate.
Mask static_mask(Variant v, const GridSpec& grid, int task_index);

// Three-stage SmoothKWTA. Logits cold-start at zero; S Adam steps at
// reconfig_lr through the relaxed readout (dropout off, model weights
// frozen, fresh optimizer every call); then reshape to the grid, smooth,
// and binarize. Returns the mask with the post-smoothing field as logits.
Mask configure_mask(const NeuronBank& model, std::span<const double> x,
                    int batch, const Targets& targets, LossKind loss,
                    const ConfigurerSpec& spec);

// Same, but on precomputed neuron scalars z = neuron_outputs(model, x)
// so evaluation loops can share the expensive forward across tasks.
Mask configure_mask_on_scalars(const NeuronBank& model,
                               std::span<const double> z, int batch,
                               const Targets& targets, LossKind loss,
                               const ConfigurerSpec& spec);

}  // namespace ftn

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftn/configurer.hpp"
#include "ftn/grid.hpp"
#include "ftn/loss.hpp"

namespace ftn {

enum class Experiment {
  synthetic_clf,
  synthetic_reg,
  mnist_shuffled,
  permuted_mnist,
};

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& name);  // config_error

// Full declarative description of one run. Field defaults here are the
// common ones; the per-experiment schedule comes from defaults_for().
struct ExperimentConfig {
  Experiment experiment = Experiment::synthetic_clf;
  Variant variant = Variant::ftn_slow;

  // [arch]
  int slots = 1024;  // H, must be a perfect square (grid side = sqrt(H))
  int layers = 8;    // hidden layers per neuron
  int inner = 8;     // hidden width per neuron
  int winners = 128;  // KWTA budget k
  double dropout = 0.2;

  // [schedule]
  int tasks = 3;
  int epochs = 1;
  int steps = 1000;  // training steps per epoch
  int train_batch = 256;
  int reconfig_batch = 256;
  int eval_batch = 4096;  // synthetic scoring-set size per task
  int support = 256;      // recovered-protocol support batch
  int fisher_batches = 50;
  double lr = 3e-4;
  double ewc_lambda = 400.0;
  int reconfig_steps = 1;     // S
  double reconfig_lr = 1.0;   // inner-loop learning rate
  Schedule reconfig_schedule = Schedule::per_batch;

  // [run]
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7};
  std::string data_dir = "data/mnist";
  std::string out_dir = "runs";

  int side() const;  // sqrt(slots); config_error if not a perfect square
  LossKind loss() const;
  int d_in() const;
  int d_out() const;
  GridSpec grid() const;
  ConfigurerSpec configurer() const;
  bool needs_mnist() const {
    return experiment == Experiment::mnist_shuffled ||
           experiment == Experiment::permuted_mnist;
  }

  void validate() const;  // config_error on any out-of-range knob
};

// Paper-scale defaults for each experiment.
ExperimentConfig defaults_for(Experiment e);

// Shrinks to the workstation-scale suite: H=256 (16x16), k=32, 3 seeds,
// reduced task/step counts; everything else untouched.
void apply_desk_preset(ExperimentConfig& cfg);

// Plain-text config: top-level `experiment`/`variant` keys, then [arch],
// [schedule], [run] sections of key = value lines; '#' comments. Unknown
// keys and malformed values are hard errors.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin);

// Applies one "section.key" (or top-level "key") override.
void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value);

// Canonical text form (parseable by parse_config_text; echoed verbatim
// into run records and by --dry-run).
std::string render_config(const ExperimentConfig& cfg);

}  // namespace ftn

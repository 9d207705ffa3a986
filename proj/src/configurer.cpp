#include "ftn/configurer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ftn/adam.hpp"
#include "ftn/errors.hpp"

namespace ftn {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::ftn_fast: return "ftn-fast";
    case Variant::ftn_slow: return "ftn-slow";
    case Variant::kwta_only: return "kwta-only";
    case Variant::fixed_mask: return "fixed-mask";
    case Variant::no_mask: return "no-mask";
    case Variant::all_ones: return "all-ones";
    case Variant::ewc: return "ewc";
  }
  return "?";
}

std::string to_string(Schedule s) {
  return s == Schedule::per_batch ? "per-batch" : "per-epoch";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::ftn_fast, Variant::ftn_slow, Variant::kwta_only,
                    Variant::fixed_mask, Variant::no_mask, Variant::all_ones,
                    Variant::ewc}) {
    if (to_string(v) == name) return v;
  }
  throw config_error("unknown variant: " + name);
}

Schedule parse_schedule(const std::string& name) {
  if (name == "per-batch") return Schedule::per_batch;
  if (name == "per-epoch") return Schedule::per_epoch;
  throw config_error("unknown schedule: " + name);
}

ConfigurerSpec spec_for(Variant v, int winners, int reconfig_steps,
                        double reconfig_lr, Schedule schedule) {
  ConfigurerSpec s;
  s.variant = v;
  s.winners = winners;
  s.reconfig_steps = reconfig_steps;
  s.reconfig_lr = reconfig_lr;
  s.schedule = schedule;
  switch (v) {
    case Variant::ftn_fast:
      s.kernel_s = 17;
      s.lateral_t = 2;
      break;
    case Variant::ftn_slow:
      s.kernel_s = 3;
      s.lateral_t = 15;
      break;
    default:
      s.kernel_s = 1;
      s.lateral_t = 0;
      break;
  }
  s.validate();
  return s;
}

std::vector<double> lateral_smooth(std::span<const double> field, int side,
                                   int s, int passes) {
  if (side < 1 || field.size() != std::size_t(side) * side) {
    throw config_error("lateral_smooth: field is not side x side");
  }
  if (s < 1 || s % 2 == 0) {
    throw config_error("lateral_smooth: kernel side must be odd and >= 1");
  }
  if (passes < 0) throw config_error("lateral_smooth: passes must be >= 0");

  std::vector<double> cur(field.begin(), field.end());
  if (s == 1 || passes == 0) return cur;

  const int half = (s - 1) / 2;
  const double inv = 1.0 / (double(s) * double(s));
  std::vector<double> next(cur.size());
  // Offsets resolved by index-mod so kernels wider than the grid wrap with
  // multiplicity; one fixed summation order keeps the op shift-equivariant
  // down to the last bit.
  auto wrap = [side](int i) {
    int m = i % side;
    return m < 0 ? m + side : m;
  };
  for (int pass = 0; pass < passes; ++pass) {
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        double acc = 0.0;
        for (int dr = -half; dr <= half; ++dr) {
          const int rr = wrap(r + dr);
          for (int dc = -half; dc <= half; ++dc) {
            acc += cur[std::size_t(rr) * side + wrap(c + dc)];
          }
        }
        next[std::size_t(r) * side + c] = acc * inv;
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

std::vector<double> kwta(std::span<const double> values, int k) {
  const int n = int(values.size());
  if (k < 1 || k > n) throw config_error("kwta: k out of range");
  for (double v : values) {
    if (!std::isfinite(v)) throw numeric_error("kwta: non-finite field");
  }
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&](int a, int b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });
  std::vector<double> gates(n, 0.0);
  for (int i = 0; i < k; ++i) gates[idx[i]] = 1.0;
  return gates;
}

Mask static_mask(Variant v, const GridSpec& grid, int task_index) {
  grid.validate();
  if (task_index < 0) throw config_error("static_mask: bad task index");
  Mask m;
  m.side = grid.side;
  m.task_index = task_index;
  m.gates.assign(grid.neurons, 0.0);
  switch (v) {
    case Variant::fixed_mask: {
      const long lo = long(task_index) * grid.winners;
      const long hi = lo + grid.winners;
      if (hi > grid.neurons) {
        throw capacity_error(
            "fixed-mask: only " + std::to_string(grid.neurons / grid.winners) +
            " disjoint blocks exist, cannot serve task " +
            std::to_string(task_index));
      }
      for (long i = lo; i < hi; ++i) m.gates[std::size_t(i)] = 1.0;
      m.provenance = MaskProvenance::fixed_block;
      break;
    }
    case Variant::no_mask:
    case Variant::ewc: {
      for (int i = 0; i < grid.winners; ++i) m.gates[std::size_t(i)] = 1.0;
      m.provenance = MaskProvenance::single_block;
      break;
    }
    case Variant::all_ones: {
      std::fill(m.gates.begin(), m.gates.end(), 1.0);
      m.provenance = MaskProvenance::all_ones;
      break;
    }
    default:
      throw usage_error("static_mask: variant " + to_string(v) +
                        " configures masks from data");
  }
  return m;
}

Mask configure_mask_on_scalars(const NeuronBank& model,
                               std::span<const double> z, int batch,
                               const Targets& targets, LossKind loss,
                               const ConfigurerSpec& spec) {
  spec.validate();
  if (!is_adaptive(spec.variant)) {
    throw usage_error("configure_mask: variant " + to_string(spec.variant) +
                      " is not adaptive");
  }
  if (batch < 1 || z.size() != std::size_t(batch) * model.grid.neurons) {
    throw usage_error("configure_mask: need a nonempty scalar batch");
  }
  const int h = model.grid.neurons;
  const int d_out = model.grid.d_out;

  std::vector<double> logits(h, 0.0);  // cold start
  std::vector<double> gates(h);
  std::vector<double> grad(h);
  AdamState opt(std::size_t(h), spec.reconfig_lr);  // fresh every call

  using MatCM = Eigen::MatrixXd;
  using MatRM =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const MatCM> zm(z.data(), h, batch);
  Eigen::Map<const MatRM> w_out(model.params.data() + model.w_out_off, d_out,
                                h);

  for (int step = 0; step < spec.reconfig_steps; ++step) {
    for (int i = 0; i < h; ++i) gates[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    auto y = readout_with_gates(model, z, batch, gates);
    LossGrad lg = loss_and_grad(loss, y, batch, d_out, targets);
    if (!std::isfinite(lg.loss)) {
      throw numeric_error("configure_mask: non-finite relaxed loss");
    }
    Eigen::Map<const MatCM> dy(lg.grad.data(), d_out, batch);
    MatCM dzhat = w_out.transpose() * dy;
    for (int k = 0; k < h; ++k) {
      double acc = (dzhat.row(k).array() * zm.row(k).array()).sum();
      grad[k] = acc * (gates[k] * (1.0 - gates[k]));
    }
    adam_step(opt, logits, grad);
  }

  Mask m;
  m.side = model.grid.side;
  m.provenance = MaskProvenance::configured;
  m.logits = lateral_smooth(logits, model.grid.side, spec.kernel_s,
                            spec.lateral_t);
  m.gates = kwta(m.logits, spec.winners);
  return m;
}

Mask configure_mask(const NeuronBank& model, std::span<const double> x,
                    int batch, const Targets& targets, LossKind loss,
                    const ConfigurerSpec& spec) {
  if (batch < 1 || x.size() != std::size_t(batch) * model.grid.d_in) {
    throw usage_error("configure_mask: need a nonempty batch");
  }
  auto z = neuron_outputs(model, x, batch);
  return configure_mask_on_scalars(model, z, batch, targets, loss, spec);
}

}  // namespace ftn

#include "ftn/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>

#include "ftn/adam.hpp"
#include "ftn/configurer.hpp"
#include "ftn/errors.hpp"
#include "ftn/ewc.hpp"
#include "ftn/rng.hpp"

namespace ftn {

std::string to_string(ScoreKind k) {
  return k == ScoreKind::accuracy ? "accuracy" : "mse";
}

std::string to_string(EvalProtocol p) {
  return p == EvalProtocol::stored ? "stored" : "recovered";
}

PerfMatrix PerfMatrix::make(int n, ScoreKind score, EvalProtocol protocol) {
  if (n < 1) throw config_error("perf matrix: need at least one task");
  PerfMatrix m;
  m.n = n;
  m.score = score;
  m.protocol = protocol;
  m.cells.assign(std::size_t(n) * n,
                 std::numeric_limits<double>::quiet_NaN());
  return m;
}

static void check_cell(const PerfMatrix& m, int stage, int task) {
  if (stage < 0 || stage >= m.n || task < 0 || task >= m.n) {
    throw usage_error("perf matrix: cell out of range");
  }
  if (task > stage) {
    throw usage_error("perf matrix: upper triangle is not populated");
  }
}

double PerfMatrix::at(int stage, int task) const {
  check_cell(*this, stage, task);
  return cells[std::size_t(stage) * n + task];
}

void PerfMatrix::set(int stage, int task, double v) {
  check_cell(*this, stage, task);
  cells[std::size_t(stage) * n + task] = v;
}

MetricsReport compute_metrics(const PerfMatrix& m) {
  if (m.n < 1) throw config_error("metrics: empty matrix");
  MetricsReport r;
  for (int j = 0; j < m.n; ++j) r.final_avg += m.at(m.n - 1, j);
  r.final_avg /= m.n;
  if (m.n == 1) {
    r.single_task = true;
    return r;
  }
  for (int j = 0; j < m.n - 1; ++j) {
    double peak = m.at(j, j);
    for (int i = j; i < m.n; ++i) peak = std::max(peak, m.at(i, j));
    r.fm += peak - m.at(m.n - 1, j);
    r.bwt += m.at(m.n - 1, j) - m.at(j, j);
  }
  r.fm /= m.n - 1;
  r.bwt /= m.n - 1;
  return r;
}

double prior_task_mean(const PerfMatrix& m) {
  if (m.n < 2) throw usage_error("prior task mean: need at least two tasks");
  double s = 0.0;
  for (int j = 0; j < m.n - 1; ++j) s += m.at(m.n - 1, j);
  return s / (m.n - 1);
}

GapDecomposition decompose_overlap_recall(const PerfMatrix& stored,
                                          const PerfMatrix& recovered,
                                          double oracle_ref) {
  if (stored.n != recovered.n || stored.score != recovered.score) {
    throw config_error("decomposition: matrices are not from the same run");
  }
  GapDecomposition d;
  if (stored.n < 2) return d;  // no prior tasks to decompose over
  d.defined = true;
  double sp = prior_task_mean(stored);
  double rp = prior_task_mean(recovered);
  if (stored.score == ScoreKind::accuracy) {
    d.overlap = oracle_ref - sp;
    d.recall = sp - rp;
  } else {
    d.overlap = sp - oracle_ref;
    d.recall = rp - sp;
  }
  return d;
}

double mask_overlap(const Mask& current, const Mask& prior) {
  if (current.gates.size() != prior.gates.size()) {
    throw config_error("mask overlap: size mismatch");
  }
  double dot = 0.0, l1 = 0.0;
  for (std::size_t i = 0; i < current.gates.size(); ++i) {
    dot += current.gates[i] * prior.gates[i];
    l1 += current.gates[i];
  }
  if (l1 == 0.0) {
    throw usage_error("mask overlap: current mask has no active gates");
  }
  return dot / l1;
}

double score_outputs(ScoreKind kind, std::span<const double> y, int batch,
                     int d_out, const Targets& targets) {
  if (batch < 1) throw config_error("score: batch must be >= 1");
  if (y.size() != std::size_t(batch) * d_out) {
    throw config_error("score: prediction shape mismatch");
  }
  if (kind == ScoreKind::accuracy) {
    if (targets.classes.size() != std::size_t(batch)) {
      throw config_error("score: class target count mismatch");
    }
    int hits = 0;
    for (int b = 0; b < batch; ++b) {
      const double* row = y.data() + std::size_t(b) * d_out;
      // max_element returns the first maximum: ties break toward the
      // lowest class index, which keeps all-zero outputs deterministic.
      int pred = int(std::max_element(row, row + d_out) - row);
      hits += (pred == targets.classes[std::size_t(b)]);
    }
    return double(hits) / batch;
  }
  if (targets.values.size() != std::size_t(batch) * d_out) {
    throw config_error("score: value target shape mismatch");
  }
  const double scale = 1.0 / (double(batch) * d_out);
  double mse = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double d = y[i] - targets.values[i];
    mse += d * d * scale;
  }
  return mse;
}

double eval_under_gates(const NeuronBank& model, const EvalSet& set,
                        std::span<const double> gates, ScoreKind kind) {
  auto z = neuron_outputs(model, set.x, set.count);
  auto y = readout_with_gates(model, z, set.count, gates);
  return score_outputs(kind, y, set.count, model.grid.d_out, set.targets);
}

namespace {

std::vector<TaskStream> build_streams(const ExperimentConfig& cfg,
                                      std::uint64_t seed,
                                      const MnistData* data) {
  std::vector<TaskStream> streams;
  streams.reserve(std::size_t(cfg.tasks));
  switch (cfg.experiment) {
    case Experiment::synthetic_clf:
    case Experiment::synthetic_reg: {
      SyntheticSpec spec = make_synthetic(cfg.loss(), seed);
      for (int t = 0; t < cfg.tasks; ++t) {
        streams.push_back(TaskStream::synthetic(
            spec, t, cfg.train_batch, seed, cfg.eval_batch, cfg.support));
      }
      break;
    }
    case Experiment::mnist_shuffled:
      for (int t = 0; t < cfg.tasks; ++t) {
        streams.push_back(TaskStream::shuffled_labels(
            *data, t, cfg.train_batch, seed, cfg.support));
      }
      break;
    case Experiment::permuted_mnist:
      for (int t = 0; t < cfg.tasks; ++t) {
        streams.push_back(TaskStream::permuted_pixels(
            *data, t, cfg.train_batch, seed, cfg.support));
      }
      break;
  }
  return streams;
}

std::vector<std::uint32_t> active_indices(const Mask& mask) {
  std::vector<std::uint32_t> idx;
  for (std::size_t i = 0; i < mask.gates.size(); ++i) {
    if (mask.gates[i] != 0.0) idx.push_back(std::uint32_t(i));
  }
  return idx;
}

}  // namespace

RunRecord run_block_sequential(const ExperimentConfig& cfg,
                               std::uint64_t seed, const MnistData* data,
                               const ProgressFn& progress,
                               NeuronBank* final_model) {
  cfg.validate();
  if (cfg.needs_mnist() && data == nullptr) {
    throw usage_error("run: dataset-backed experiment without loaded data");
  }

  const GridSpec grid = cfg.grid();
  const LossKind kind = cfg.loss();
  const ScoreKind score =
      kind == LossKind::cross_entropy ? ScoreKind::accuracy : ScoreKind::mse;
  const ConfigurerSpec cspec = cfg.configurer();
  const bool adaptive = is_adaptive(cfg.variant);

  RngStream init_rng(seed, StreamPurpose::init);
  NeuronBank model = init_model(grid, init_rng);
  AdamState opt(model.params.size(), cfg.lr);
  std::vector<TaskStream> streams = build_streams(cfg, seed, data);

  RunRecord rec;
  rec.config = cfg;
  rec.seed = seed;
  rec.stored = PerfMatrix::make(cfg.tasks, score, EvalProtocol::stored);
  rec.recovered = PerfMatrix::make(cfg.tasks, score, EvalProtocol::recovered);

  std::vector<Mask> stored_masks(std::size_t(cfg.tasks));
  std::vector<EwcAnchor> anchors;
  ForwardCache cache;

  for (int t = 0; t < cfg.tasks; ++t) {
    const auto block_start = std::chrono::steady_clock::now();
    adam_reset(opt);
    RngStream dropout_rng(seed, StreamPurpose::dropout, std::uint64_t(t));

    Mask mask;
    if (!adaptive) mask = static_mask(cfg.variant, grid, t);

    for (int e = 0; e < cfg.epochs; ++e) {
      if (adaptive && cspec.schedule == Schedule::per_epoch) {
        Batch probe = streams[std::size_t(t)].reconfig_batch(
            cfg.reconfig_batch);
        mask = configure_mask(model, probe.x, probe.batch, probe.targets,
                              kind, cspec);
      }
      for (int s = 0; s < cfg.steps; ++s) {
        Batch b = streams[std::size_t(t)].next_train();
        if (adaptive && cspec.schedule == Schedule::per_batch) {
          Batch probe = streams[std::size_t(t)].reconfig_batch(
              cfg.reconfig_batch);
          mask = configure_mask(model, probe.x, probe.batch, probe.targets,
                                kind, cspec);
        }
        PenaltyGrad penalty;
        if (cfg.variant == Variant::ewc && !anchors.empty()) {
          penalty = ewc_penalty_grad(model, anchors);
        }
        train_step(model, b.x, b.batch, b.targets, kind, mask, opt,
                   dropout_rng, cache, penalty.grad);
      }
    }

    stored_masks[std::size_t(t)] = std::move(mask);
    rec.mask_indices.push_back(active_indices(stored_masks[std::size_t(t)]));

    if (cfg.variant == Variant::ewc) {
      std::vector<SampleBatch> sample;
      sample.reserve(std::size_t(cfg.fisher_batches));
      for (int i = 0; i < cfg.fisher_batches; ++i) {
        Batch b = streams[std::size_t(t)].fisher_batch(cfg.train_batch);
        sample.push_back(
            {std::move(b.x), std::move(b.targets), b.batch});
      }
      anchors.push_back(estimate_fisher(model, sample, kind,
                                        stored_masks[std::size_t(t)], t,
                                        cfg.ewc_lambda));
    }

    for (int j = 0; j <= t; ++j) {
      EvalSet scoring = streams[std::size_t(j)].scoring_set();
      auto z = neuron_outputs(model, scoring.x, scoring.count);
      auto y_stored = readout_with_gates(model, z, scoring.count,
                                         stored_masks[std::size_t(j)].gates);
      rec.stored.set(t, j,
                     score_outputs(score, y_stored, scoring.count,
                                   grid.d_out, scoring.targets));
      if (adaptive) {
        // Recover the mask from a support batch that carries no task
        // identity, then score on the same shared neuron scalars.
        EvalSet support = streams[std::size_t(j)].support_set();
        auto z_support = neuron_outputs(model, support.x, support.count);
        Mask found = configure_mask_on_scalars(
            model, z_support, support.count, support.targets, kind, cspec);
        auto y_rec =
            readout_with_gates(model, z, scoring.count, found.gates);
        rec.recovered.set(t, j,
                          score_outputs(score, y_rec, scoring.count,
                                        grid.d_out, scoring.targets));
      } else {
        rec.recovered.set(t, j, rec.stored.at(t, j));
      }
    }

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      block_start)
            .count();
    rec.block_seconds.push_back(seconds);
    if (progress) {
      progress({t, cfg.tasks, rec.stored.at(t, t), seconds});
    }
  }

  rec.stored_metrics = compute_metrics(rec.stored);
  rec.recovered_metrics = compute_metrics(rec.recovered);
  rec.digest = record_payload_digest(rec);
  if (final_model) *final_model = std::move(model);
  return rec;
}

}  // namespace ftn

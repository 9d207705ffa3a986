#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ftn/config.hpp"
#include "ftn/grid.hpp"
#include "ftn/loss.hpp"
#include "ftn/model.hpp"
#include "ftn/tasks.hpp"

namespace ftn {

enum class ScoreKind { accuracy, mse };
enum class EvalProtocol { stored, recovered };

std::string to_string(ScoreKind k);
std::string to_string(EvalProtocol p);

// Lower-triangular performance matrix: row i holds the scores on tasks
// 0..i measured after training block i. Upper-triangle cells stay NaN.
struct PerfMatrix {
  int n = 0;
  ScoreKind score = ScoreKind::accuracy;
  EvalProtocol protocol = EvalProtocol::stored;
  std::vector<double> cells;  // n*n row-major

  static PerfMatrix make(int n, ScoreKind score, EvalProtocol protocol);
  double at(int stage, int task) const;
  void set(int stage, int task, double v);
};

// Final-row summary metrics. For accuracy matrices final_avg is ACC;
// for MSE matrices it is the mean final MSE (lower is better). fm is the
// mean over prior tasks of (peak score - final score) down each column;
// bwt the mean of (final score - score when trained).
struct MetricsReport {
  double final_avg = 0.0;
  double fm = 0.0;
  double bwt = 0.0;
  bool single_task = false;  // n == 1: fm/bwt have no prior tasks, kept 0
};

MetricsReport compute_metrics(const PerfMatrix& m);

// Mean of the final row over prior tasks only (j < n-1): the quantity the
// overlap/recall decomposition compares against its oracle reference.
// Requires n >= 2.
double prior_task_mean(const PerfMatrix& m);

// Splits the gap to an oracle reference into the training-time component
// (mask overlap: stored-protocol prior-task mean vs the oracle) and the
// evaluation-time component (recall error: stored vs recovered). Signs are
// oriented so that larger = worse for both score kinds.
struct GapDecomposition {
  bool defined = false;  // requires n >= 2
  double overlap = 0.0;
  double recall = 0.0;
};

GapDecomposition decompose_overlap_recall(const PerfMatrix& stored,
                                          const PerfMatrix& recovered,
                                          double oracle_ref);

// Fraction of the current mask's active gates shared with a prior mask:
// dot(gates) / ||current gates||_1. Empty current mask -> usage_error.
double mask_overlap(const Mask& current, const Mask& prior);

// Accuracy (argmax with ties to the lowest class index) or MSE of raw
// model outputs against the targets.
double score_outputs(ScoreKind kind, std::span<const double> y, int batch,
                     int d_out, const Targets& targets);

// Eval-mode score of one evaluation set under a fixed gate vector.
double eval_under_gates(const NeuronBank& model, const EvalSet& set,
                        std::span<const double> gates, ScoreKind kind);

struct BlockProgress {
  int block = 0;
  int blocks = 0;
  double current_score = 0.0;  // just-trained task, stored protocol
  double seconds = 0.0;        // wall time of the whole block
};
using ProgressFn = std::function<void(const BlockProgress&)>;

// Everything one (config, seed) cell produces. `digest` covers the
// timing-free payload, so identical reruns agree on it bitwise while
// block_seconds may differ.
struct RunRecord {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  PerfMatrix stored;
  PerfMatrix recovered;
  MetricsReport stored_metrics;
  MetricsReport recovered_metrics;
  std::vector<std::vector<std::uint32_t>> mask_indices;  // per task
  std::vector<double> block_seconds;
  std::string digest;
};

// Block-sequential training of cfg.tasks blocks under one seed, with the
// dual stored/recovered evaluation after every block. `data` must be
// non-null for the dataset-backed experiments. When `final_model` is
// non-null the trained bank is moved there (for checkpointing).
RunRecord run_block_sequential(const ExperimentConfig& cfg,
                               std::uint64_t seed, const MnistData* data,
                               const ProgressFn& progress = {},
                               NeuronBank* final_model = nullptr);

// --- persistence ---

// "<experiment>-<variant>-seed<N>"; the run directory name of one cell.
std::string run_cell_name(const ExperimentConfig& cfg, std::uint64_t seed);

// SHA-256 of the canonical JSON payload (everything except block_seconds
// and the digest itself).
std::string record_payload_digest(const RunRecord& record);

void save_run_record(const RunRecord& record, const std::string& path);
RunRecord load_run_record(const std::string& path);  // data_error on damage

// CSV of the matrix: header row, then one line per training stage with
// empty cells above the diagonal. Full round-trip precision.
std::string matrix_csv(const PerfMatrix& m);
void write_matrix_csv(const PerfMatrix& m, const std::string& path);

}  // namespace ftn

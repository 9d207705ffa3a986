#pragma once

#include <string>
#include <vector>

#include "ftn/protocol.hpp"

namespace ftn {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std over seeds; 0 for a single seed
};

struct VariantSummary {
  Variant variant = Variant::ftn_slow;
  int seeds = 0;
  MeanStd final_avg;
  MeanStd fm;
  MeanStd bwt;
};

struct DecompositionRow {
  Variant variant = Variant::ftn_slow;
  int seeds = 0;
  MeanStd overlap;
  MeanStd recall;
};

// Aggregated tables over one directory of run records: per variant, mean
// and std over seeds, under both protocols. The overlap/recall
// decomposition appears when a fixed-mask oracle run is present and the
// experiment has at least two tasks.
struct ReportTables {
  Experiment experiment = Experiment::synthetic_clf;
  ScoreKind score = ScoreKind::accuracy;
  int tasks = 0;
  std::vector<VariantSummary> recovered;  // the headline protocol
  std::vector<VariantSummary> stored;
  bool has_decomposition = false;
  double oracle_ref = 0.0;  // fixed-mask prior-task mean over its seeds
  std::vector<DecompositionRow> decomposition;
};

// Metrics are recomputed from the matrices, so hand-built records need
// only the config, seed, and the two matrices. Records must agree on
// everything but variant and seed; duplicates of one (variant, seed) cell
// are rejected. config_error on any incompatibility.
ReportTables aggregate_records(const std::vector<RunRecord>& records);

// Human-readable tables (recovered first, then stored, then the
// decomposition when present).
std::string render_report(const ReportTables& tables);

// Machine form of the two summary tables:
// protocol,variant,seeds,final_mean,final_std,fm_mean,fm_std,bwt_mean,bwt_std
std::string report_csv(const ReportTables& tables);

// variant,seeds,overlap_mean,overlap_std,recall_mean,recall_std
// usage_error when the tables carry no decomposition.
std::string decomposition_csv(const ReportTables& tables);

}  // namespace ftn

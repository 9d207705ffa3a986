#include "ftn/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "ftn/errors.hpp"

namespace ftn {

namespace {

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  for (double x : xs) r.mean += x;
  r.mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(var / double(xs.size()));
  return r;
}

// Same run up to variant and seed choice? Rendered text of a neutralized
// copy makes the comparison total over every config field at once.
std::string compat_key(const ExperimentConfig& cfg) {
  ExperimentConfig key = cfg;
  key.variant = Variant::ftn_slow;
  key.seeds = {0};
  key.data_dir.clear();
  key.out_dir.clear();
  return render_config(key);
}

VariantSummary summarize(Variant v, const std::vector<const RunRecord*>& recs,
                         EvalProtocol protocol) {
  VariantSummary s;
  s.variant = v;
  s.seeds = int(recs.size());
  std::vector<double> finals, fms, bwts;
  for (const RunRecord* r : recs) {
    const PerfMatrix& m =
        protocol == EvalProtocol::stored ? r->stored : r->recovered;
    MetricsReport mr = compute_metrics(m);
    finals.push_back(mr.final_avg);
    fms.push_back(mr.fm);
    bwts.push_back(mr.bwt);
  }
  s.final_avg = mean_std(finals);
  s.fm = mean_std(fms);
  s.bwt = mean_std(bwts);
  return s;
}

}  // namespace

ReportTables aggregate_records(const std::vector<RunRecord>& records) {
  if (records.empty()) {
    throw usage_error("report: no run records to aggregate");
  }
  const std::string key = compat_key(records.front().config);
  std::set<std::pair<Variant, std::uint64_t>> seen;
  // map keeps the variant order stable (enum declaration order).
  std::map<Variant, std::vector<const RunRecord*>> groups;
  for (const RunRecord& r : records) {
    if (compat_key(r.config) != key) {
      throw config_error(
          "report: mixed configurations in one aggregation (cell " +
          run_cell_name(r.config, r.seed) + " differs beyond variant/seed)");
    }
    if (r.stored.n != r.config.tasks || r.recovered.n != r.config.tasks) {
      throw config_error("report: record matrices disagree with the config");
    }
    if (!seen.insert({r.config.variant, r.seed}).second) {
      throw config_error("report: duplicate cell " +
                         run_cell_name(r.config, r.seed));
    }
    groups[r.config.variant].push_back(&r);
  }

  ReportTables t;
  t.experiment = records.front().config.experiment;
  t.score = records.front().stored.score;
  t.tasks = records.front().config.tasks;
  for (auto& [variant, recs] : groups) {
    std::sort(recs.begin(), recs.end(),
              [](const RunRecord* a, const RunRecord* b) {
                return a->seed < b->seed;
              });
    t.recovered.push_back(summarize(variant, recs, EvalProtocol::recovered));
    t.stored.push_back(summarize(variant, recs, EvalProtocol::stored));
  }

  auto oracle_it = groups.find(Variant::fixed_mask);
  if (oracle_it != groups.end() && t.tasks >= 2) {
    std::vector<double> refs;
    for (const RunRecord* r : oracle_it->second) {
      refs.push_back(prior_task_mean(r->stored));
    }
    t.oracle_ref = mean_std(refs).mean;
    t.has_decomposition = true;
    for (auto& [variant, recs] : groups) {
      if (variant == Variant::fixed_mask) continue;
      DecompositionRow row;
      row.variant = variant;
      row.seeds = int(recs.size());
      std::vector<double> overlaps, recalls;
      for (const RunRecord* r : recs) {
        GapDecomposition d =
            decompose_overlap_recall(r->stored, r->recovered, t.oracle_ref);
        overlaps.push_back(d.overlap);
        recalls.push_back(d.recall);
      }
      row.overlap = mean_std(overlaps);
      row.recall = mean_std(recalls);
      t.decomposition.push_back(row);
    }
  }
  return t;
}

namespace {

std::string fixed3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string pm(const MeanStd& m) {
  return fixed3(m.mean) + " +/- " + fixed3(m.std);
}

std::string full(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

void render_table(std::ostringstream& out, const char* title,
                  const std::vector<VariantSummary>& rows, ScoreKind score) {
  const char* final_name = score == ScoreKind::accuracy ? "acc" : "mse";
  out << title << "\n";
  char head[128];
  std::snprintf(head, sizeof(head), "  %-12s %5s  %-16s %-16s %-16s\n",
                "variant", "seeds", final_name, "fm", "bwt");
  out << head;
  for (const VariantSummary& s : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "  %-12s %5d  %-16s %-16s %-16s\n",
                  to_string(s.variant).c_str(), s.seeds, pm(s.final_avg).c_str(),
                  pm(s.fm).c_str(), pm(s.bwt).c_str());
    out << line;
  }
}

}  // namespace

std::string render_report(const ReportTables& t) {
  std::ostringstream out;
  out << "experiment: " << to_string(t.experiment) << " ("
      << to_string(t.score) << ", " << t.tasks << " tasks)\n\n";
  render_table(out, "recovered protocol (headline)", t.recovered, t.score);
  out << "\n";
  render_table(out, "stored protocol", t.stored, t.score);
  if (t.has_decomposition) {
    out << "\ndecomposition vs fixed-mask reference "
        << fixed3(t.oracle_ref) << " (prior-task mean)\n";
    char head[128];
    std::snprintf(head, sizeof(head), "  %-12s %5s  %-16s %-16s\n", "variant",
                  "seeds", "overlap", "recall");
    out << head;
    for (const DecompositionRow& r : t.decomposition) {
      char line[160];
      std::snprintf(line, sizeof(line), "  %-12s %5d  %-16s %-16s\n",
                    to_string(r.variant).c_str(), r.seeds,
                    pm(r.overlap).c_str(), pm(r.recall).c_str());
      out << line;
    }
  }
  return out.str();
}

std::string report_csv(const ReportTables& t) {
  std::ostringstream out;
  out << "protocol,variant,seeds,final_mean,final_std,fm_mean,fm_std,"
         "bwt_mean,bwt_std\n";
  auto emit = [&](const char* protocol, const VariantSummary& s) {
    out << protocol << "," << to_string(s.variant) << "," << s.seeds << ","
        << full(s.final_avg.mean) << "," << full(s.final_avg.std) << ","
        << full(s.fm.mean) << "," << full(s.fm.std) << "," << full(s.bwt.mean)
        << "," << full(s.bwt.std) << "\n";
  };
  for (const VariantSummary& s : t.recovered) emit("recovered", s);
  for (const VariantSummary& s : t.stored) emit("stored", s);
  return out.str();
}

std::string decomposition_csv(const ReportTables& t) {
  if (!t.has_decomposition) {
    throw usage_error("report: no fixed-mask oracle run to decompose against");
  }
  std::ostringstream out;
  out << "variant,seeds,overlap_mean,overlap_std,recall_mean,recall_std\n";
  for (const DecompositionRow& r : t.decomposition) {
    out << to_string(r.variant) << "," << r.seeds << "," << full(r.overlap.mean)
        << "," << full(r.overlap.std) << "," << full(r.recall.mean) << ","
        << full(r.recall.std) << "\n";
  }
  return out.str();
}

}  // namespace ftn

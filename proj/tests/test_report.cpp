#include "ftn/report.hpp"

#include <string>
#include <vector>

#include "doctest.h"
#include "ftn/errors.hpp"

using namespace ftn;

namespace {

ExperimentConfig base_cfg() {
  ExperimentConfig c = defaults_for(Experiment::synthetic_clf);
  apply_desk_preset(c);
  return c;
}

PerfMatrix from_rows(const std::vector<std::vector<double>>& rows,
                     EvalProtocol p) {
  PerfMatrix m =
      PerfMatrix::make(int(rows.size()), ScoreKind::accuracy, p);
  for (int i = 0; i < m.n; ++i) {
    for (int j = 0; j <= i; ++j) {
      m.set(i, j, rows[std::size_t(i)][std::size_t(j)]);
    }
  }
  return m;
}

// All fixture values are dyadic rationals so means and stds come out
// exact in binary64 and the CSV digits can be golden-checked.
RunRecord make_rec(Variant v, std::uint64_t seed,
                   const std::vector<std::vector<double>>& stored,
                   const std::vector<std::vector<double>>* recovered =
                       nullptr) {
  RunRecord r;
  r.config = base_cfg();
  r.config.variant = v;
  r.seed = seed;
  r.stored = from_rows(stored, EvalProtocol::stored);
  r.recovered =
      from_rows(recovered ? *recovered : stored, EvalProtocol::recovered);
  return r;
}

std::vector<std::vector<double>> flat(double v) {
  return {{v}, {v, v}, {v, v, v}};
}

std::vector<RunRecord> fixture_records() {
  std::vector<RunRecord> recs;
  recs.push_back(make_rec(Variant::fixed_mask, 0, flat(0.875)));
  recs.push_back(make_rec(Variant::fixed_mask, 1, flat(0.625)));
  recs.push_back(make_rec(Variant::ftn_slow, 0, flat(0.25)));
  recs.push_back(make_rec(Variant::ftn_slow, 1, flat(0.75)));
  recs.push_back(
      make_rec(Variant::no_mask, 0, {{0.75}, {0.5, 0.75}, {0.25, 0.5, 0.75}}));
  return recs;
}

const VariantSummary& find(const std::vector<VariantSummary>& rows,
                           Variant v) {
  for (const auto& r : rows) {
    if (r.variant == v) return r;
  }
  REQUIRE(false);
  return rows.front();
}

}  // namespace

TEST_CASE("aggregation reproduces hand-computed table values") {
  ReportTables t = aggregate_records(fixture_records());
  CHECK(t.experiment == Experiment::synthetic_clf);
  CHECK(t.score == ScoreKind::accuracy);
  CHECK(t.tasks == 3);
  REQUIRE(t.recovered.size() == 3);
  REQUIRE(t.stored.size() == 3);

  const VariantSummary& slow = find(t.recovered, Variant::ftn_slow);
  CHECK(slow.seeds == 2);
  CHECK(slow.final_avg.mean == 0.5);
  CHECK(slow.final_avg.std == 0.25);
  CHECK(slow.fm.mean == 0.0);
  CHECK(slow.bwt.mean == 0.0);

  const VariantSummary& fm = find(t.recovered, Variant::fixed_mask);
  CHECK(fm.final_avg.mean == 0.75);
  CHECK(fm.final_avg.std == 0.125);

  // Single seed: every std column is exactly zero.
  const VariantSummary& nm = find(t.recovered, Variant::no_mask);
  CHECK(nm.seeds == 1);
  CHECK(nm.final_avg.mean == 0.5);
  CHECK(nm.final_avg.std == 0.0);
  CHECK(nm.fm.mean == 0.375);
  CHECK(nm.fm.std == 0.0);
  CHECK(nm.bwt.mean == -0.375);
}

TEST_CASE("decomposition against the fixed-mask oracle") {
  ReportTables t = aggregate_records(fixture_records());
  REQUIRE(t.has_decomposition);
  CHECK(t.oracle_ref == 0.75);  // mean of 0.875 and 0.625 prior means
  REQUIRE(t.decomposition.size() == 2);  // fixed-mask itself excluded

  CHECK(t.decomposition[0].variant == Variant::ftn_slow);
  CHECK(t.decomposition[0].overlap.mean == 0.25);  // (0.5 + 0.0) / 2
  CHECK(t.decomposition[0].overlap.std == 0.25);
  CHECK(t.decomposition[0].recall.mean == 0.0);  // stored == recovered

  CHECK(t.decomposition[1].variant == Variant::no_mask);
  CHECK(t.decomposition[1].overlap.mean == 0.375);
  CHECK(t.decomposition[1].recall.mean == 0.0);
}

TEST_CASE("csv output is exact for exact inputs") {
  ReportTables t = aggregate_records(fixture_records());
  std::string csv = report_csv(t);
  CHECK(csv.find("protocol,variant,seeds,final_mean,final_std,fm_mean,"
                 "fm_std,bwt_mean,bwt_std\n") == 0);
  CHECK(csv.find("recovered,ftn-slow,2,0.5,0.25,0,0,0,0\n") !=
        std::string::npos);
  CHECK(csv.find("recovered,no-mask,1,0.5,0,0.375,0,-0.375,0\n") !=
        std::string::npos);
  CHECK(csv.find("stored,fixed-mask,2,0.75,0.125,0,0,0,0\n") !=
        std::string::npos);

  std::string dec = decomposition_csv(t);
  CHECK(dec.find("ftn-slow,2,0.25,0.25,0,0\n") != std::string::npos);
  CHECK(dec.find("no-mask,1,0.375,0,0,0\n") != std::string::npos);

  std::string text = render_report(t);
  CHECK(text.find("recovered protocol (headline)") != std::string::npos);
  CHECK(text.find("stored protocol") != std::string::npos);
  CHECK(text.find("0.500 +/- 0.250") != std::string::npos);
  CHECK(text.find("fixed-mask reference 0.750") != std::string::npos);
}

TEST_CASE("no oracle run, no decomposition") {
  std::vector<RunRecord> recs;
  recs.push_back(make_rec(Variant::ftn_slow, 0, flat(0.25)));
  recs.push_back(make_rec(Variant::no_mask, 1, flat(0.5)));
  ReportTables t = aggregate_records(recs);
  CHECK_FALSE(t.has_decomposition);
  CHECK(t.decomposition.empty());
  CHECK_THROWS_AS(decomposition_csv(t), usage_error);
}

TEST_CASE("aggregation rejects bad inputs") {
  CHECK_THROWS_AS(aggregate_records({}), usage_error);

  auto recs = fixture_records();
  recs.push_back(make_rec(Variant::ftn_slow, 0, flat(0.125)));  // duplicate
  CHECK_THROWS_WITH_AS(aggregate_records(recs), doctest::Contains("duplicate"),
                       config_error);

  recs = fixture_records();
  recs[2].config.slots = 1024;  // same variant, different architecture
  CHECK_THROWS_WITH_AS(aggregate_records(recs), doctest::Contains("mixed"),
                       config_error);

  RunRecord bad = make_rec(Variant::ftn_slow, 0, flat(0.25));
  bad.config.tasks = 2;  // matrix no longer matches its config
  CHECK_THROWS_AS(aggregate_records({bad}), config_error);
}

TEST_CASE("single-task records aggregate without a decomposition") {
  RunRecord a = make_rec(Variant::fixed_mask, 0, {{0.5}});
  a.config.tasks = 1;
  RunRecord b = make_rec(Variant::no_mask, 0, {{0.25}});
  b.config.tasks = 1;
  ReportTables t = aggregate_records({a, b});
  CHECK(t.tasks == 1);
  CHECK_FALSE(t.has_decomposition);
  CHECK(find(t.recovered, Variant::no_mask).final_avg.mean == 0.25);
}

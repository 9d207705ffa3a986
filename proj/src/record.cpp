#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "ftn/digest.hpp"
#include "ftn/errors.hpp"
#include "ftn/protocol.hpp"

namespace ftn {

namespace {

using nlohmann::ordered_json;

ordered_json config_json(const ExperimentConfig& c) {
  ordered_json j;
  j["experiment"] = to_string(c.experiment);
  j["variant"] = to_string(c.variant);
  j["arch"] = {{"slots", c.slots},
               {"layers", c.layers},
               {"inner", c.inner},
               {"winners", c.winners},
               {"dropout", c.dropout}};
  j["schedule"] = {{"tasks", c.tasks},
                   {"epochs", c.epochs},
                   {"steps", c.steps},
                   {"train_batch", c.train_batch},
                   {"reconfig_batch", c.reconfig_batch},
                   {"eval_batch", c.eval_batch},
                   {"support", c.support},
                   {"fisher_batches", c.fisher_batches},
                   {"lr", c.lr},
                   {"ewc_lambda", c.ewc_lambda},
                   {"reconfig_steps", c.reconfig_steps},
                   {"reconfig_lr", c.reconfig_lr},
                   {"reconfig_schedule", to_string(c.reconfig_schedule)}};
  j["run"] = {{"seeds", c.seeds},
              {"data_dir", c.data_dir},
              {"out_dir", c.out_dir}};
  return j;
}

ExperimentConfig config_from_json(const ordered_json& j) {
  ExperimentConfig c;
  c.experiment = parse_experiment(j.at("experiment").get<std::string>());
  c.variant = parse_variant(j.at("variant").get<std::string>());
  const auto& a = j.at("arch");
  c.slots = a.at("slots").get<int>();
  c.layers = a.at("layers").get<int>();
  c.inner = a.at("inner").get<int>();
  c.winners = a.at("winners").get<int>();
  c.dropout = a.at("dropout").get<double>();
  const auto& s = j.at("schedule");
  c.tasks = s.at("tasks").get<int>();
  c.epochs = s.at("epochs").get<int>();
  c.steps = s.at("steps").get<int>();
  c.train_batch = s.at("train_batch").get<int>();
  c.reconfig_batch = s.at("reconfig_batch").get<int>();
  c.eval_batch = s.at("eval_batch").get<int>();
  c.support = s.at("support").get<int>();
  c.fisher_batches = s.at("fisher_batches").get<int>();
  c.lr = s.at("lr").get<double>();
  c.ewc_lambda = s.at("ewc_lambda").get<double>();
  c.reconfig_steps = s.at("reconfig_steps").get<int>();
  c.reconfig_lr = s.at("reconfig_lr").get<double>();
  c.reconfig_schedule =
      parse_schedule(s.at("reconfig_schedule").get<std::string>());
  const auto& r = j.at("run");
  c.seeds = r.at("seeds").get<std::vector<std::uint64_t>>();
  c.data_dir = r.at("data_dir").get<std::string>();
  c.out_dir = r.at("out_dir").get<std::string>();
  return c;
}

ordered_json matrix_json(const PerfMatrix& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.n; ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j <= i; ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  ordered_json j;
  j["score"] = to_string(m.score);
  j["protocol"] = to_string(m.protocol);
  j["rows"] = std::move(rows);
  return j;
}

PerfMatrix matrix_from_json(const ordered_json& j) {
  const auto& rows = j.at("rows");
  int n = int(rows.size());
  ScoreKind score = j.at("score").get<std::string>() == "accuracy"
                        ? ScoreKind::accuracy
                        : ScoreKind::mse;
  EvalProtocol protocol = j.at("protocol").get<std::string>() == "stored"
                              ? EvalProtocol::stored
                              : EvalProtocol::recovered;
  PerfMatrix m = PerfMatrix::make(n, score, protocol);
  for (int i = 0; i < n; ++i) {
    const auto& row = rows.at(std::size_t(i));
    if (int(row.size()) != i + 1) {
      throw data_error("run record: matrix row " + std::to_string(i) +
                       " has wrong length");
    }
    for (int t = 0; t <= i; ++t) {
      m.set(i, t, row.at(std::size_t(t)).get<double>());
    }
  }
  return m;
}

ordered_json metrics_json(const MetricsReport& r) {
  return {{"final_avg", r.final_avg},
          {"fm", r.fm},
          {"bwt", r.bwt},
          {"single_task", r.single_task}};
}

MetricsReport metrics_from_json(const ordered_json& j) {
  MetricsReport r;
  r.final_avg = j.at("final_avg").get<double>();
  r.fm = j.at("fm").get<double>();
  r.bwt = j.at("bwt").get<double>();
  r.single_task = j.at("single_task").get<bool>();
  return r;
}

// Everything a rerun must reproduce bitwise; wall times and the digest
// itself stay out.
ordered_json payload_json(const RunRecord& rec) {
  ordered_json j;
  j["config"] = config_json(rec.config);
  j["seed"] = rec.seed;
  j["stored"] = matrix_json(rec.stored);
  j["recovered"] = matrix_json(rec.recovered);
  j["stored_metrics"] = metrics_json(rec.stored_metrics);
  j["recovered_metrics"] = metrics_json(rec.recovered_metrics);
  j["masks"] = rec.mask_indices;
  return j;
}

}  // namespace

std::string run_cell_name(const ExperimentConfig& cfg, std::uint64_t seed) {
  return to_string(cfg.experiment) + "-" + to_string(cfg.variant) + "-seed" +
         std::to_string(seed);
}

std::string record_payload_digest(const RunRecord& record) {
  return sha256_hex(payload_json(record).dump());
}

void save_run_record(const RunRecord& record, const std::string& path) {
  ordered_json j = payload_json(record);
  j["block_seconds"] = record.block_seconds;
  j["digest"] = record.digest;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw data_error("cannot write run record " + path);
  f << j.dump(2) << "\n";
  if (!f) throw data_error("short write on run record " + path);
}

RunRecord load_run_record(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw data_error("cannot open run record " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(f);
  } catch (const std::exception& e) {
    throw data_error("run record " + path + ": " + e.what());
  }
  RunRecord rec;
  try {
    rec.config = config_from_json(j.at("config"));
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.stored = matrix_from_json(j.at("stored"));
    rec.recovered = matrix_from_json(j.at("recovered"));
    rec.stored_metrics = metrics_from_json(j.at("stored_metrics"));
    rec.recovered_metrics = metrics_from_json(j.at("recovered_metrics"));
    rec.mask_indices =
        j.at("masks").get<std::vector<std::vector<std::uint32_t>>>();
    rec.block_seconds = j.at("block_seconds").get<std::vector<double>>();
    rec.digest = j.at("digest").get<std::string>();
  } catch (const error&) {
    throw;
  } catch (const std::exception& e) {
    throw data_error("run record " + path + ": " + e.what());
  }
  std::string recomputed = record_payload_digest(rec);
  if (recomputed != rec.digest) {
    throw data_error("run record " + path +
                     ": payload digest mismatch (file edited or damaged)");
  }
  return rec;
}

namespace {

std::string fmt_cell(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace

std::string matrix_csv(const PerfMatrix& m) {
  std::ostringstream out;
  out << "stage";
  for (int j = 0; j < m.n; ++j) out << ",task_" << j;
  out << "\n";
  for (int i = 0; i < m.n; ++i) {
    out << i;
    for (int j = 0; j < m.n; ++j) {
      out << ",";
      if (j <= i) out << fmt_cell(m.at(i, j));
    }
    out << "\n";
  }
  return out.str();
}

void write_matrix_csv(const PerfMatrix& m, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw data_error("cannot write matrix csv " + path);
  f << matrix_csv(m);
  if (!f) throw data_error("short write on matrix csv " + path);
}

}  // namespace ftn

#include "ftn/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "ftn/errors.hpp"

namespace ftn {

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::synthetic_clf: return "synthetic-clf";
    case Experiment::synthetic_reg: return "synthetic-reg";
    case Experiment::mnist_shuffled: return "mnist-shuffled";
    case Experiment::permuted_mnist: return "permuted-mnist";
  }
  throw config_error("unknown experiment enum value");
}

Experiment parse_experiment(const std::string& name) {
  if (name == "synthetic-clf") return Experiment::synthetic_clf;
  if (name == "synthetic-reg") return Experiment::synthetic_reg;
  if (name == "mnist-shuffled") return Experiment::mnist_shuffled;
  if (name == "permuted-mnist") return Experiment::permuted_mnist;
  throw config_error(
      "unknown experiment '" + name +
      "' (expected synthetic-clf, synthetic-reg, mnist-shuffled, "
      "permuted-mnist)");
}

int ExperimentConfig::side() const {
  int s = int(std::lround(std::sqrt(double(slots))));
  if (s < 1 || s * s != slots) {
    throw config_error("arch.slots must be a perfect square, got " +
                       std::to_string(slots));
  }
  return s;
}

LossKind ExperimentConfig::loss() const {
  return experiment == Experiment::synthetic_reg ? LossKind::mse
                                                 : LossKind::cross_entropy;
}

int ExperimentConfig::d_in() const { return needs_mnist() ? 784 : 2; }

int ExperimentConfig::d_out() const {
  switch (experiment) {
    case Experiment::synthetic_clf: return 2;
    case Experiment::synthetic_reg: return 1;
    default: return 10;
  }
}

GridSpec ExperimentConfig::grid() const {
  GridSpec g;
  g.side = side();
  g.neurons = slots;
  g.winners = winners;
  g.d_in = d_in();
  g.d_out = d_out();
  g.layers = layers;
  g.inner = inner;
  g.dropout_p = dropout;
  return g;
}

ConfigurerSpec ExperimentConfig::configurer() const {
  return spec_for(variant, winners, reconfig_steps, reconfig_lr,
                  reconfig_schedule);
}

void ExperimentConfig::validate() const {
  grid().validate();
  configurer().validate();
  if (tasks < 1) throw config_error("schedule.tasks must be >= 1");
  if (experiment == Experiment::synthetic_clf ||
      experiment == Experiment::synthetic_reg) {
    if (tasks > 3) {
      throw config_error(
          "schedule.tasks: the synthetic generator defines 3 tasks");
    }
  }
  if (epochs < 1) throw config_error("schedule.epochs must be >= 1");
  if (steps < 1) throw config_error("schedule.steps must be >= 1");
  if (train_batch < 1) throw config_error("schedule.train_batch must be >= 1");
  if (reconfig_batch < 1) {
    throw config_error("schedule.reconfig_batch must be >= 1");
  }
  if (eval_batch < 1) throw config_error("schedule.eval_batch must be >= 1");
  if (support < 1) throw config_error("schedule.support must be >= 1");
  if (fisher_batches < 1) {
    throw config_error("schedule.fisher_batches must be >= 1");
  }
  if (!(lr > 0.0)) throw config_error("schedule.lr must be > 0");
  if (!(ewc_lambda >= 0.0)) {
    throw config_error("schedule.ewc_lambda must be >= 0");
  }
  if (is_adaptive(variant) && reconfig_steps > 0 && !(reconfig_lr > 0.0)) {
    throw config_error("schedule.reconfig_lr must be > 0");
  }
  if (seeds.empty()) throw config_error("run.seeds must not be empty");
  if (out_dir.empty()) throw config_error("run.out_dir must not be empty");
}

ExperimentConfig defaults_for(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::synthetic_clf:
      c.tasks = 3;
      c.epochs = 1;
      c.steps = 1000;
      c.reconfig_steps = 1;
      c.reconfig_lr = 1.0;
      c.reconfig_schedule = Schedule::per_batch;
      break;
    case Experiment::synthetic_reg:
      c.tasks = 3;
      c.epochs = 1;
      c.steps = 1000;
      c.reconfig_steps = 10;
      c.reconfig_lr = 0.2;
      c.reconfig_schedule = Schedule::per_batch;
      break;
    case Experiment::mnist_shuffled:
      c.tasks = 5;
      c.epochs = 5;
      c.steps = 400;
      c.reconfig_steps = 20;
      c.reconfig_lr = 0.2;
      c.reconfig_schedule = Schedule::per_epoch;
      break;
    case Experiment::permuted_mnist:
      c.tasks = 10;
      c.epochs = 3;
      c.steps = 400;
      c.reconfig_steps = 10;
      c.reconfig_lr = 0.3;
      c.reconfig_schedule = Schedule::per_epoch;
      break;
  }
  return c;
}

void apply_desk_preset(ExperimentConfig& cfg) {
  cfg.slots = 256;
  cfg.winners = 32;
  cfg.seeds = {0, 1, 2};
  switch (cfg.experiment) {
    case Experiment::synthetic_clf:
    case Experiment::synthetic_reg:
      cfg.steps = 250;
      break;
    case Experiment::mnist_shuffled:
      cfg.tasks = 3;
      cfg.epochs = 2;
      cfg.steps = 200;
      break;
    case Experiment::permuted_mnist:
      cfg.tasks = 4;
      cfg.epochs = 1;
      cfg.steps = 200;
      break;
  }
}

namespace {

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw config_error(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw config_error(key + ": expected a real number, got '" + v + "'");
  }
}

std::vector<std::uint64_t> to_seed_list(const std::string& key,
                                        const std::string& v) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    // trim
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) {
      throw config_error(key + ": empty entry in '" + v + "'");
    }
    item = item.substr(b, e - b + 1);
    std::uint64_t s = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), s);
    if (ec != std::errc() || p != item.data() + item.size()) {
      throw config_error(key + ": expected a seed integer, got '" + item +
                         "'");
    }
    seeds.push_back(s);
  }
  if (seeds.empty()) throw config_error(key + ": empty seed list");
  return seeds;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

struct KeyEntry {
  const char* key;  // "section.name" or top-level "name"
  Setter set;
};

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = {
      {"experiment",
       [](ExperimentConfig& c, const std::string& v) {
         c.experiment = parse_experiment(v);
       }},
      {"variant",
       [](ExperimentConfig& c, const std::string& v) {
         c.variant = parse_variant(v);
       }},
      {"arch.slots",
       [](ExperimentConfig& c, const std::string& v) {
         c.slots = to_int("arch.slots", v);
       }},
      {"arch.layers",
       [](ExperimentConfig& c, const std::string& v) {
         c.layers = to_int("arch.layers", v);
       }},
      {"arch.inner",
       [](ExperimentConfig& c, const std::string& v) {
         c.inner = to_int("arch.inner", v);
       }},
      {"arch.winners",
       [](ExperimentConfig& c, const std::string& v) {
         c.winners = to_int("arch.winners", v);
       }},
      {"arch.dropout",
       [](ExperimentConfig& c, const std::string& v) {
         c.dropout = to_double("arch.dropout", v);
       }},
      {"schedule.tasks",
       [](ExperimentConfig& c, const std::string& v) {
         c.tasks = to_int("schedule.tasks", v);
       }},
      {"schedule.epochs",
       [](ExperimentConfig& c, const std::string& v) {
         c.epochs = to_int("schedule.epochs", v);
       }},
      {"schedule.steps",
       [](ExperimentConfig& c, const std::string& v) {
         c.steps = to_int("schedule.steps", v);
       }},
      {"schedule.train_batch",
       [](ExperimentConfig& c, const std::string& v) {
         c.train_batch = to_int("schedule.train_batch", v);
       }},
      {"schedule.reconfig_batch",
       [](ExperimentConfig& c, const std::string& v) {
         c.reconfig_batch = to_int("schedule.reconfig_batch", v);
       }},
      {"schedule.eval_batch",
       [](ExperimentConfig& c, const std::string& v) {
         c.eval_batch = to_int("schedule.eval_batch", v);
       }},
      {"schedule.support",
       [](ExperimentConfig& c, const std::string& v) {
         c.support = to_int("schedule.support", v);
       }},
      {"schedule.fisher_batches",
       [](ExperimentConfig& c, const std::string& v) {
         c.fisher_batches = to_int("schedule.fisher_batches", v);
       }},
      {"schedule.lr",
       [](ExperimentConfig& c, const std::string& v) {
         c.lr = to_double("schedule.lr", v);
       }},
      {"schedule.ewc_lambda",
       [](ExperimentConfig& c, const std::string& v) {
         c.ewc_lambda = to_double("schedule.ewc_lambda", v);
       }},
      {"schedule.reconfig_steps",
       [](ExperimentConfig& c, const std::string& v) {
         c.reconfig_steps = to_int("schedule.reconfig_steps", v);
       }},
      {"schedule.reconfig_lr",
       [](ExperimentConfig& c, const std::string& v) {
         c.reconfig_lr = to_double("schedule.reconfig_lr", v);
       }},
      {"schedule.reconfig_schedule",
       [](ExperimentConfig& c, const std::string& v) {
         c.reconfig_schedule = parse_schedule(v);
       }},
      {"run.seeds",
       [](ExperimentConfig& c, const std::string& v) {
         c.seeds = to_seed_list("run.seeds", v);
       }},
      {"run.data_dir",
       [](ExperimentConfig& c, const std::string& v) { c.data_dir = v; }},
      {"run.out_dir",
       [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value) {
  for (const auto& entry : key_table()) {
    if (key == entry.key) {
      entry.set(cfg, value);
      return;
    }
  }
  throw config_error("unknown config key '" + key + "'");
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
  // First pass: the experiment key selects the schedule defaults, so it
  // must be known before any other key is applied.
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::vector<std::pair<std::string, std::string>> entries;
  int lineno = 0;
  bool seen_experiment = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto where = [&] { return origin + ":" + std::to_string(lineno); };
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw config_error(where() + ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "arch" && section != "schedule" && section != "run") {
        throw config_error(where() + ": unknown section [" + section + "]");
      }
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error(where() + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw config_error(where() + ": empty key");
    std::string full = section.empty() ? key : section + "." + key;
    if (full == "experiment") {
      if (!entries.empty()) {
        throw config_error(where() +
                           ": 'experiment' must be the first key (it "
                           "selects the schedule defaults)");
      }
      seen_experiment = true;
    }
    entries.emplace_back(full, value);
  }
  if (!seen_experiment) {
    throw config_error(origin + ": missing required key 'experiment'");
  }
  ExperimentConfig cfg = defaults_for(parse_experiment(entries.front().second));
  for (std::size_t i = 1; i < entries.size(); ++i) {
    apply_override(cfg, entries[i].first, entries[i].second);
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "experiment = " << to_string(cfg.experiment) << "\n";
  out << "variant = " << to_string(cfg.variant) << "\n";
  out << "\n[arch]\n";
  out << "slots = " << cfg.slots << "\n";
  out << "layers = " << cfg.layers << "\n";
  out << "inner = " << cfg.inner << "\n";
  out << "winners = " << cfg.winners << "\n";
  out << "dropout = " << fmt_double(cfg.dropout) << "\n";
  out << "\n[schedule]\n";
  out << "tasks = " << cfg.tasks << "\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "steps = " << cfg.steps << "\n";
  out << "train_batch = " << cfg.train_batch << "\n";
  out << "reconfig_batch = " << cfg.reconfig_batch << "\n";
  out << "eval_batch = " << cfg.eval_batch << "\n";
  out << "support = " << cfg.support << "\n";
  out << "fisher_batches = " << cfg.fisher_batches << "\n";
  out << "lr = " << fmt_double(cfg.lr) << "\n";
  out << "ewc_lambda = " << fmt_double(cfg.ewc_lambda) << "\n";
  out << "reconfig_steps = " << cfg.reconfig_steps << "\n";
  out << "reconfig_lr = " << fmt_double(cfg.reconfig_lr) << "\n";
  out << "reconfig_schedule = " << to_string(cfg.reconfig_schedule) << "\n";
  out << "\n[run]\n";
  out << "seeds = ";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (i) out << ",";
    out << cfg.seeds[i];
  }
  out << "\n";
  out << "data_dir = " << cfg.data_dir << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  return out.str();
}

}  // namespace ftn

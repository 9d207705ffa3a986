// Command-line front end: run experiment cells, aggregate reports, export
// mask images, and fetch the dataset. Exit codes: 0 ok, 1 usage/config,
// 2 data, 3 numeric.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "ftn/config.hpp"
#include "ftn/errors.hpp"
#include "ftn/image.hpp"
#include "ftn/protocol.hpp"
#include "ftn/report.hpp"
#include "ftn/tasks.hpp"

namespace fs = std::filesystem;
using namespace ftn;

namespace {

constexpr const char* kDefaultUrlBase =
    "https://ossci-datasets.s3.amazonaws.com/mnist";

std::string env_data_dir() {
  const char* v = std::getenv("FTN_DATA_DIR");
  return v ? std::string(v) : std::string();
}

struct RunArgs {
  std::string config_path;
  std::string experiment;
  bool desk = false;
  bool dry_run = false;
  std::string variants;  // comma list; empty = config's variant
  std::string seeds;
  std::vector<std::string> sets;  // key=value overrides
  std::string data_dir;
  std::string out_dir;
  int jobs = 1;
};

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

ExperimentConfig resolve_config(const RunArgs& a) {
  if (a.config_path.empty() == a.experiment.empty()) {
    throw usage_error(
        "run: give either a config file or --experiment, not both");
  }
  ExperimentConfig cfg = a.config_path.empty()
                             ? defaults_for(parse_experiment(a.experiment))
                             : parse_config_file(a.config_path);
  if (a.desk) apply_desk_preset(cfg);
  for (const std::string& kv : a.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw usage_error("--set expects key=value, got '" + kv + "'");
    }
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!a.seeds.empty()) apply_override(cfg, "run.seeds", a.seeds);
  // data dir: flag beats env beats config.
  if (!a.data_dir.empty()) {
    cfg.data_dir = a.data_dir;
  } else if (!env_data_dir().empty()) {
    cfg.data_dir = env_data_dir();
  }
  if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
  return cfg;
}

std::vector<Variant> resolve_variants(const ExperimentConfig& cfg,
                                      const std::string& flag) {
  std::vector<Variant> vs;
  if (flag.empty()) {
    vs.push_back(cfg.variant);
    return vs;
  }
  for (const std::string& name : split_commas(flag)) {
    vs.push_back(parse_variant(name));
  }
  return vs;
}

// Rethrow with the cell name in front, preserving the error class (the
// class picks the exit code).
template <typename E>
[[noreturn]] void rethrow_for_cell(const E& e, const std::string& cell) {
  throw E("cell " + cell + ": " + e.what());
}

int cmd_run(const RunArgs& args) {
  ExperimentConfig base = resolve_config(args);
  std::vector<Variant> variants = resolve_variants(base, args.variants);

  // One cell per (variant, seed); each cell's record carries its own seed.
  struct Cell {
    ExperimentConfig cfg;
    std::uint64_t seed;
    std::string name;
  };
  std::vector<Cell> cells;
  for (Variant v : variants) {
    ExperimentConfig c = base;
    c.variant = v;
    c.validate();
    for (std::uint64_t seed : base.seeds) {
      ExperimentConfig cell_cfg = c;
      cell_cfg.seeds = {seed};
      cells.push_back({cell_cfg, seed, run_cell_name(cell_cfg, seed)});
    }
  }

  if (args.dry_run) {
    for (std::size_t i = 0; i < variants.size(); ++i) {
      if (i) std::cout << "\n";
      ExperimentConfig c = base;
      c.variant = variants[i];
      std::cout << render_config(c);
    }
    return 0;
  }

  MnistData mnist;
  const MnistData* data = nullptr;
  if (base.needs_mnist()) {
    mnist = load_mnist(base.data_dir);
    data = &mnist;
  }
  fs::create_directories(base.out_dir);

  const char* score_name =
      base.loss() == LossKind::cross_entropy ? "acc" : "mse";
  std::mutex io;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures(cells.size());

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      try {
        ProgressFn progress = [&](const BlockProgress& p) {
          std::lock_guard<std::mutex> lock(io);
          char line[160];
          std::snprintf(line, sizeof(line),
                        "[%s] block %d/%d %s %.4f (%.1fs)",
                        cell.name.c_str(), p.block + 1, p.blocks, score_name,
                        p.current_score, p.seconds);
          std::cout << line << "\n" << std::flush;
        };
        RunRecord rec =
            run_block_sequential(cell.cfg, cell.seed, data, progress);
        fs::path out(cell.cfg.out_dir);
        save_run_record(rec, (out / (cell.name + ".json")).string());
        write_matrix_csv(rec.stored,
                         (out / (cell.name + "-stored.csv")).string());
        write_matrix_csv(rec.recovered,
                         (out / (cell.name + "-recovered.csv")).string());
        std::lock_guard<std::mutex> lock(io);
        std::cout << "[" << cell.name << "] wrote "
                  << (out / (cell.name + ".json")).string() << "\n";
      } catch (const capacity_error& e) {
        failures[i] = std::make_exception_ptr(
            capacity_error("cell " + cell.name + ": " + e.what()));
        return;
      } catch (const usage_error& e) {
        failures[i] = std::make_exception_ptr(
            usage_error("cell " + cell.name + ": " + e.what()));
        return;
      } catch (const config_error& e) {
        failures[i] = std::make_exception_ptr(
            config_error("cell " + cell.name + ": " + e.what()));
        return;
      } catch (const data_error& e) {
        failures[i] = std::make_exception_ptr(
            data_error("cell " + cell.name + ": " + e.what()));
        return;
      } catch (const numeric_error& e) {
        failures[i] = std::make_exception_ptr(
            numeric_error("cell " + cell.name + ": " + e.what()));
        return;
      } catch (...) {
        failures[i] = std::current_exception();
        return;
      }
    }
  };

  int jobs = std::max(1, args.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);  // completed cells stay on disk
  }
  return 0;
}

std::vector<RunRecord> load_dir_records(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw usage_error("not a run directory: " + dir);
  }
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) {
    throw usage_error("no run records (*.json) in " + dir);
  }
  std::vector<RunRecord> records;
  records.reserve(paths.size());
  for (const auto& p : paths) records.push_back(load_run_record(p.string()));
  return records;
}

int cmd_report(const std::string& dir) {
  std::vector<RunRecord> records = load_dir_records(dir);
  ReportTables tables = aggregate_records(records);
  std::cout << render_report(tables);
  fs::path out(dir);
  {
    std::ofstream f(out / "report.csv", std::ios::trunc);
    f << report_csv(tables);
  }
  std::cout << "\nwrote " << (out / "report.csv").string() << "\n";
  if (tables.has_decomposition) {
    std::ofstream f(out / "decomposition.csv", std::ios::trunc);
    f << decomposition_csv(tables);
    std::cout << "wrote " << (out / "decomposition.csv").string() << "\n";
  }
  return 0;
}

int cmd_export_masks(const std::string& dir) {
  std::vector<RunRecord> records = load_dir_records(dir);
  fs::path out(dir);
  for (const RunRecord& rec : records) {
    const int side = rec.config.side();
    const int slots = rec.config.slots;
    const std::string cell = run_cell_name(rec.config, rec.seed);
    if (rec.mask_indices.size() > palette_size()) {
      std::cerr << "warning: " << cell << " has " << rec.mask_indices.size()
                << " tasks, palette colors repeat after " << palette_size()
                << "\n";
    }
    std::vector<std::vector<double>> gate_sets;
    for (std::size_t t = 0; t < rec.mask_indices.size(); ++t) {
      std::vector<double> gates(std::size_t(slots), 0.0);
      for (auto i : rec.mask_indices[t]) {
        if (int(i) >= slots) {
          throw data_error(cell + ": mask index " + std::to_string(i) +
                           " outside the grid");
        }
        gates[i] = 1.0;
      }
      std::string stem = cell + "-task" + std::to_string(t);
      write_pgm(mask_image(gates, side), (out / (stem + ".pgm")).string());
      std::ofstream f(out / (stem + ".txt"), std::ios::trunc);
      f << mask_text(gates, side);
      gate_sets.push_back(std::move(gates));
    }
    write_ppm(overlay_masks(gate_sets, side),
              (out / (cell + "-overlay.ppm")).string());
    std::cout << cell << ": " << gate_sets.size()
              << " masks -> pgm/txt + overlay.ppm\n";
  }
  return 0;
}

int cmd_fetch(std::string data_dir, const std::string& url_base) {
  if (data_dir.empty()) data_dir = env_data_dir();
  if (data_dir.empty()) data_dir = "data/mnist";
  auto paths = fetch_mnist(url_base, data_dir);
  for (const auto& p : paths) std::cout << p << "\n";
  std::cout << "verified " << paths.size() << " files in " << data_dir
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Functional task networks: block-sequential continual-learning "
      "benchmarks with mask-based parameter isolation"};
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand(
      "run", "Train (variant x seed) cells and write run records");
  run->add_option("config", run_args.config_path,
                  "Config file (key = value with [arch]/[schedule]/[run])");
  run->add_option("--experiment", run_args.experiment,
                  "Experiment defaults instead of a config file: "
                  "synthetic-clf, synthetic-reg, mnist-shuffled, "
                  "permuted-mnist");
  run->add_flag("--preset-desk,--desk", run_args.desk,
                "Workstation-scale preset (256 slots, 3 seeds, short "
                "schedules)");
  run->add_flag("--dry-run", run_args.dry_run,
                "Print the resolved config(s) and exit");
  run->add_option("--variant", run_args.variants,
                  "Comma list of variants to run (default: config's)");
  run->add_option("--seeds", run_args.seeds, "Comma list of seeds");
  run->add_option("--set", run_args.sets,
                  "Override one key, e.g. --set schedule.lr=1e-4")
      ->take_all();
  run->add_option("--data-dir", run_args.data_dir,
                  "Dataset directory (falls back to $FTN_DATA_DIR)");
  run->add_option("--out-dir", run_args.out_dir, "Run record directory");
  run->add_option("--jobs", run_args.jobs, "Parallel cells")
      ->check(CLI::PositiveNumber);

  std::string report_dir;
  CLI::App* report =
      app.add_subcommand("report", "Aggregate run records into tables");
  report->add_option("dir", report_dir, "Directory of run records")
      ->required();

  std::string masks_dir;
  CLI::App* masks = app.add_subcommand(
      "export-masks", "Write per-task PGM masks and per-seed PPM overlays");
  masks->add_option("dir", masks_dir, "Directory of run records")->required();

  std::string fetch_dir, url_base = kDefaultUrlBase;
  CLI::App* fetch =
      app.add_subcommand("fetch-data", "Download and verify the dataset");
  fetch->add_option("--data-dir", fetch_dir,
                    "Destination (falls back to $FTN_DATA_DIR, then "
                    "data/mnist)");
  fetch->add_option("--url-base", url_base, "Mirror base URL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*report) return cmd_report(report_dir);
    if (*masks) return cmd_export_masks(masks_dir);
    if (*fetch) return cmd_fetch(fetch_dir, url_base);
    throw usage_error("no subcommand selected");
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const error& e) {  // usage/config/capacity
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

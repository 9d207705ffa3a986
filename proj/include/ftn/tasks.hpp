#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ftn/loss.hpp"
#include "ftn/rng.hpp"

namespace ftn {

// ---------------------------------------------------------------------------
// Synthetic benchmark: 2-D inputs through a fixed 24-D encoder; task t reads
// a private 8-coordinate block of the latent through a sinusoid. The blocks
// are disjoint, so the tasks conflict on identical inputs by construction.

struct SyntheticSpec {
  static constexpr int latent_dim = 24;
  static constexpr int block_dim = 8;
  static constexpr int n_tasks = 3;
  static constexpr double frequency = 8.0;

  std::vector<double> encoder;  // [latent_dim, 2] row-major, unit-norm rows
  LossKind kind = LossKind::cross_entropy;
};

// Encoder rows drawn once per experiment seed (normalized Gaussian pairs).
SyntheticSpec make_synthetic(LossKind kind, std::uint64_t seed);

// Latent statistic s_t(x): mean of sin(frequency * z_i) over task t's block.
double synthetic_score(const SyntheticSpec& spec, int task, double x0,
                       double x1);

struct Batch {
  std::vector<double> x;  // [batch, d_in]
  Targets targets;
  int batch = 0;
};

// X ~ uniform[-1,1]^2; classification label = score > 0, regression target
// = score. Draws advance `rng`.
Batch synthetic_batch(const SyntheticSpec& spec, int task, int n,
                      RngStream& rng);

// ---------------------------------------------------------------------------
// MNIST ingestion. Pixels are kept as raw bytes and scaled by 1/255 when
// batches are materialized.

struct MnistData {
  std::vector<std::uint8_t> train_images;  // [n_train, 784] row-major
  std::vector<std::uint8_t> train_labels;  // [n_train]
  std::vector<std::uint8_t> test_images;   // [n_test, 784]
  std::vector<std::uint8_t> test_labels;   // [n_test]

  int train_count() const { return int(train_labels.size()); }
  int test_count() const { return int(test_labels.size()); }
};

constexpr int kImageSide = 28;
constexpr int kImageDim = kImageSide * kImageSide;
constexpr int kNumClasses = 10;

// Big-endian IDX parsers; input may be gzip-compressed (detected by the
// 0x1f8b signature, not the file name). Violations raise data_error with
// the file and byte offset.
std::vector<std::uint8_t> load_idx_images(const std::string& path,
                                          int& count);
std::vector<std::uint8_t> load_idx_labels(const std::string& path,
                                          int& count);

// Loads the four standard files ({train,t10k}-{images-idx3,labels-idx1}-
// ubyte, optionally .gz) from `dir`. With require_full the canonical
// 60000/10000 counts are enforced; tests use smaller fixtures.
MnistData load_mnist(const std::string& dir, bool require_full = true);

struct RemoteFile {
  std::string name;
  std::size_t size = 0;
  std::string sha256;
};

// Sizes and digests of the canonical gzip archives.
const std::vector<RemoteFile>& mnist_manifest();

// Downloads any file that is missing or fails verification; files already
// present with matching digests cause no traffic. A file that fails its
// digest check after download is moved aside to <name>.quarantine and the
// fetch fails with data_error naming the URL.
std::vector<std::string> fetch_mnist(const std::string& url_base,
                                     const std::string& dest_dir,
                                     const std::vector<RemoteFile>& manifest =
                                         mnist_manifest());

// ---------------------------------------------------------------------------
// Task streams. A stream is the single source of training batches for one
// task block plus pure accessors for the evaluation sets; recreating it
// with the same (config, seed) replays the identical sequence.

struct EvalSet {
  std::vector<double> x;
  Targets targets;
  int count = 0;
};

enum class TaskKind { synthetic, shuffled_labels, permuted_pixels };

class TaskStream {
 public:
  static TaskStream synthetic(const SyntheticSpec& spec, int task, int batch,
                              std::uint64_t seed, int eval_count = 4096,
                              int support_count = 256);
  // Task 0 keeps canonical labels; later tasks apply a seeded permutation
  // of the 10 labels. Images untouched.
  static TaskStream shuffled_labels(const MnistData& data, int task,
                                    int batch, std::uint64_t seed,
                                    int support_count = 256);
  // Seeded pixel permutation per task (task 0 identity), labels untouched.
  static TaskStream permuted_pixels(const MnistData& data, int task,
                                    int batch, std::uint64_t seed,
                                    int support_count = 256);

  TaskKind kind() const { return kind_; }
  int task() const { return task_; }
  int batch() const { return batch_; }
  LossKind loss() const { return loss_; }
  int d_in() const { return d_in_; }
  int d_out() const { return d_out_; }

  // Next training batch. MNIST streams walk a seeded shuffle of the train
  // set and reshuffle whenever fewer than `batch` indices remain; the
  // synthetic stream draws fresh points.
  Batch next_train();

  // Probe batch for per-epoch mask configuration, from its own stream.
  Batch reconfig_batch(int n);

  // Sample batch for Fisher estimation at block end, from its own stream
  // (with replacement for the dataset-backed streams).
  Batch fisher_batch(int n);

  // Scoring set: synthetic uses a fixed held-out sample; MNIST uses the
  // full test set minus the support indices. Pure (no stream state).
  EvalSet scoring_set() const;

  // Support batch for mask recovery at evaluation time: synthetic draws a
  // fresh fixed sample; MNIST uses a fixed subset of the test set that the
  // scoring set excludes. Pure.
  EvalSet support_set() const;

  // The realized per-task transforms (exposed for tests/reports).
  const std::vector<std::uint32_t>& label_permutation() const {
    return label_perm_;
  }
  const std::vector<std::uint32_t>& pixel_permutation() const {
    return pixel_perm_;
  }

 private:
  TaskStream() = default;
  void gather(const std::uint8_t* images, const std::uint8_t* labels,
              std::span<const std::uint32_t> idx, std::vector<double>& x,
              std::vector<int>& classes) const;
  Batch gather_train(std::span<const std::uint32_t> idx) const;

  TaskKind kind_ = TaskKind::synthetic;
  int task_ = 0;
  int batch_ = 256;
  LossKind loss_ = LossKind::cross_entropy;
  int d_in_ = 2;
  int d_out_ = 2;
  std::uint64_t seed_ = 0;
  int eval_count_ = 4096;
  int support_count_ = 256;

  SyntheticSpec synth_;
  const MnistData* data_ = nullptr;
  std::vector<std::uint32_t> label_perm_;  // size 10 for mnist streams
  std::vector<std::uint32_t> pixel_perm_;  // size 784 for permuted streams
  std::vector<std::uint32_t> support_idx_;  // sorted test indices

  std::optional<RngStream> train_rng_;
  std::optional<RngStream> reconfig_rng_;
  std::optional<RngStream> fisher_rng_;
  std::vector<std::uint32_t> order_;  // current train shuffle
  std::size_t cursor_ = 0;
};

}  // namespace ftn

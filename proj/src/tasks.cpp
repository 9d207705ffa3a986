#include "ftn/tasks.hpp"

#include <algorithm>
#include <cmath>

#include "ftn/errors.hpp"

namespace ftn {

SyntheticSpec make_synthetic(LossKind kind, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.kind = kind;
  spec.encoder.resize(std::size_t(SyntheticSpec::latent_dim) * 2);
  RngStream rng(seed, StreamPurpose::encoder);
  for (int i = 0; i < SyntheticSpec::latent_dim; ++i) {
    double a = 0.0, b = 0.0, n = 0.0;
    do {
      a = rng.normal();
      b = rng.normal();
      n = std::sqrt(a * a + b * b);
    } while (n < 1e-12);
    spec.encoder[std::size_t(i) * 2] = a / n;
    spec.encoder[std::size_t(i) * 2 + 1] = b / n;
  }
  return spec;
}

double synthetic_score(const SyntheticSpec& spec, int task, double x0,
                       double x1) {
  if (task < 0 || task >= SyntheticSpec::n_tasks) {
    throw config_error("synthetic: task index out of range");
  }
  const int lo = task * SyntheticSpec::block_dim;
  double s = 0.0;
  for (int i = lo; i < lo + SyntheticSpec::block_dim; ++i) {
    double z = spec.encoder[std::size_t(i) * 2] * x0 +
               spec.encoder[std::size_t(i) * 2 + 1] * x1;
    s += std::sin(SyntheticSpec::frequency * z);
  }
  return s / double(SyntheticSpec::block_dim);
}

Batch synthetic_batch(const SyntheticSpec& spec, int task, int n,
                      RngStream& rng) {
  if (n < 1) throw config_error("synthetic: batch must be >= 1");
  Batch b;
  b.batch = n;
  b.x.resize(std::size_t(n) * 2);
  for (int i = 0; i < n; ++i) {
    b.x[std::size_t(i) * 2] = rng.uniform(-1.0, 1.0);
    b.x[std::size_t(i) * 2 + 1] = rng.uniform(-1.0, 1.0);
  }
  if (spec.kind == LossKind::cross_entropy) {
    b.targets.classes.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
      double s = synthetic_score(spec, task, b.x[std::size_t(i) * 2],
                                 b.x[std::size_t(i) * 2 + 1]);
      b.targets.classes[std::size_t(i)] = s > 0.0 ? 1 : 0;
    }
  } else {
    b.targets.values.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
      b.targets.values[std::size_t(i)] = synthetic_score(
          spec, task, b.x[std::size_t(i) * 2], b.x[std::size_t(i) * 2 + 1]);
    }
  }
  return b;
}

TaskStream TaskStream::synthetic(const SyntheticSpec& spec, int task,
                                 int batch, std::uint64_t seed,
                                 int eval_count, int support_count) {
  if (task < 0 || task >= SyntheticSpec::n_tasks) {
    throw config_error("synthetic stream: task index out of range");
  }
  if (batch < 1) throw config_error("stream: batch must be >= 1");
  TaskStream s;
  s.kind_ = TaskKind::synthetic;
  s.task_ = task;
  s.batch_ = batch;
  s.loss_ = spec.kind;
  s.d_in_ = 2;
  s.d_out_ = spec.kind == LossKind::cross_entropy ? 2 : 1;
  s.seed_ = seed;
  s.eval_count_ = eval_count;
  s.support_count_ = support_count;
  s.synth_ = spec;
  s.train_rng_.emplace(seed, StreamPurpose::train_data, std::uint64_t(task));
  s.reconfig_rng_.emplace(seed, StreamPurpose::reconfig_data,
                          std::uint64_t(task));
  s.fisher_rng_.emplace(seed, StreamPurpose::fisher_data, std::uint64_t(task));
  return s;
}

TaskStream TaskStream::shuffled_labels(const MnistData& data, int task,
                                       int batch, std::uint64_t seed,
                                       int support_count) {
  if (task < 0) throw config_error("stream: task index out of range");
  if (batch < 1) throw config_error("stream: batch must be >= 1");
  if (data.train_count() < batch) {
    throw config_error("stream: batch larger than the training set");
  }
  if (data.test_count() < support_count) {
    throw data_error("stream: dataset too small for the support batch");
  }
  TaskStream s;
  s.kind_ = TaskKind::shuffled_labels;
  s.task_ = task;
  s.batch_ = batch;
  s.loss_ = LossKind::cross_entropy;
  s.d_in_ = kImageDim;
  s.d_out_ = kNumClasses;
  s.seed_ = seed;
  s.support_count_ = support_count;
  s.data_ = &data;
  if (task == 0) {
    s.label_perm_.resize(kNumClasses);
    for (std::uint32_t c = 0; c < kNumClasses; ++c) s.label_perm_[c] = c;
  } else {
    RngStream pr(seed, StreamPurpose::permutations, std::uint64_t(task));
    s.label_perm_ = pr.permutation(kNumClasses);
  }
  RngStream sr(seed, StreamPurpose::support_data, std::uint64_t(task));
  auto pick = sr.permutation(std::uint32_t(data.test_count()));
  s.support_idx_.assign(pick.begin(), pick.begin() + support_count);
  std::sort(s.support_idx_.begin(), s.support_idx_.end());
  s.train_rng_.emplace(seed, StreamPurpose::train_data, std::uint64_t(task));
  s.reconfig_rng_.emplace(seed, StreamPurpose::reconfig_data,
                          std::uint64_t(task));
  s.fisher_rng_.emplace(seed, StreamPurpose::fisher_data, std::uint64_t(task));
  s.order_ = s.train_rng_->permutation(std::uint32_t(data.train_count()));
  return s;
}

TaskStream TaskStream::permuted_pixels(const MnistData& data, int task,
                                       int batch, std::uint64_t seed,
                                       int support_count) {
  TaskStream s = shuffled_labels(data, task, batch, seed, support_count);
  s.kind_ = TaskKind::permuted_pixels;
  s.label_perm_.clear();
  if (task == 0) {
    s.pixel_perm_.resize(kImageDim);
    for (std::uint32_t j = 0; j < kImageDim; ++j) s.pixel_perm_[j] = j;
  } else {
    RngStream pr(seed, StreamPurpose::permutations, std::uint64_t(task));
    s.pixel_perm_ = pr.permutation(kImageDim);
  }
  return s;
}

void TaskStream::gather(const std::uint8_t* images,
                        const std::uint8_t* labels,
                        std::span<const std::uint32_t> idx,
                        std::vector<double>& x,
                        std::vector<int>& classes) const {
  const bool permute_pixels = !pixel_perm_.empty();
  const bool permute_labels = !label_perm_.empty();
  x.resize(idx.size() * kImageDim);
  classes.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::uint8_t* src = images + std::size_t(idx[i]) * kImageDim;
    double* dst = x.data() + i * kImageDim;
    if (permute_pixels) {
      for (int j = 0; j < kImageDim; ++j) {
        dst[j] = double(src[pixel_perm_[std::size_t(j)]]) / 255.0;
      }
    } else {
      for (int j = 0; j < kImageDim; ++j) dst[j] = double(src[j]) / 255.0;
    }
    int lab = labels[idx[i]];
    classes[i] = permute_labels ? int(label_perm_[std::size_t(lab)]) : lab;
  }
}

Batch TaskStream::gather_train(std::span<const std::uint32_t> idx) const {
  Batch b;
  b.batch = int(idx.size());
  gather(data_->train_images.data(), data_->train_labels.data(), idx, b.x,
         b.targets.classes);
  return b;
}

Batch TaskStream::next_train() {
  if (kind_ == TaskKind::synthetic) {
    return synthetic_batch(synth_, task_, batch_, *train_rng_);
  }
  if (cursor_ + std::size_t(batch_) > order_.size()) {
    order_ = train_rng_->permutation(std::uint32_t(data_->train_count()));
    cursor_ = 0;
    if (order_.size() < std::size_t(batch_)) {
      throw config_error("stream: batch larger than the training set");
    }
  }
  std::span<const std::uint32_t> idx(order_.data() + cursor_,
                                     std::size_t(batch_));
  cursor_ += std::size_t(batch_);
  return gather_train(idx);
}

Batch TaskStream::reconfig_batch(int n) {
  if (n < 1) throw config_error("stream: reconfig batch must be >= 1");
  if (kind_ == TaskKind::synthetic) {
    return synthetic_batch(synth_, task_, n, *reconfig_rng_);
  }
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) {
    i = std::uint32_t(reconfig_rng_->below(std::uint64_t(
        data_->train_count())));
  }
  return gather_train(idx);
}

Batch TaskStream::fisher_batch(int n) {
  if (n < 1) throw config_error("stream: fisher batch must be >= 1");
  if (kind_ == TaskKind::synthetic) {
    return synthetic_batch(synth_, task_, n, *fisher_rng_);
  }
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) {
    i = std::uint32_t(fisher_rng_->below(std::uint64_t(
        data_->train_count())));
  }
  return gather_train(idx);
}

EvalSet TaskStream::scoring_set() const {
  EvalSet out;
  if (kind_ == TaskKind::synthetic) {
    RngStream ev(seed_, StreamPurpose::eval_data, std::uint64_t(task_));
    Batch b = synthetic_batch(synth_, task_, eval_count_, ev);
    out.x = std::move(b.x);
    out.targets = std::move(b.targets);
    out.count = b.batch;
    return out;
  }
  std::vector<std::uint32_t> idx;
  idx.reserve(std::size_t(data_->test_count()) - support_idx_.size());
  std::size_t s = 0;
  for (std::uint32_t i = 0; i < std::uint32_t(data_->test_count()); ++i) {
    if (s < support_idx_.size() && support_idx_[s] == i) {
      ++s;
      continue;
    }
    idx.push_back(i);
  }
  out.count = int(idx.size());
  gather(data_->test_images.data(), data_->test_labels.data(), idx, out.x,
         out.targets.classes);
  return out;
}

EvalSet TaskStream::support_set() const {
  EvalSet out;
  if (kind_ == TaskKind::synthetic) {
    RngStream sup(seed_, StreamPurpose::support_data, std::uint64_t(task_));
    Batch b = synthetic_batch(synth_, task_, support_count_, sup);
    out.x = std::move(b.x);
    out.targets = std::move(b.targets);
    out.count = b.batch;
    return out;
  }
  out.count = int(support_idx_.size());
  gather(data_->test_images.data(), data_->test_labels.data(), support_idx_,
         out.x, out.targets.classes);
  return out;
}

}  // namespace ftn

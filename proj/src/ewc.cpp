#include "ftn/ewc.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "ftn/errors.hpp"

namespace ftn {

EwcAnchor estimate_fisher(const NeuronBank& model,
                          const std::vector<SampleBatch>& sample,
                          LossKind kind, const Mask& mask, int task_index,
                          double lambda) {
  long total = 0;
  for (const auto& b : sample) total += b.batch;
  if (total == 0) throw usage_error("estimate_fisher: empty sample");
  if (mask.gates.size() != std::size_t(model.grid.neurons)) {
    throw config_error("estimate_fisher: mask length mismatch");
  }

  EwcAnchor out;
  out.task_index = task_index;
  out.lambda = lambda;
  out.anchor = model.params;
  out.fisher.assign(model.params.size(), 0.0);

  ForwardCache cache;
  for (const auto& b : sample) {
    auto y = forward(model, b.x, b.batch, mask.gates, RunMode::eval, nullptr,
                     cache);
    auto dy = loglik_grad_per_sample(kind, y, b.batch, model.grid.d_out,
                                     b.targets);
    Gradients sq = backward(model, cache, dy, /*accumulate_squares=*/true);
    for (std::size_t i = 0; i < out.fisher.size(); ++i) {
      out.fisher[i] += sq.params[i];
    }
  }
  const double inv = 1.0 / double(total);
  for (auto& f : out.fisher) f *= inv;

  // Gates at zero already produce exactly-zero gradients; rewrite the
  // inactive slices anyway so the stored Fisher carries clean +0.0.
  for (int k = 0; k < model.grid.neurons; ++k) {
    if (mask.gates[std::size_t(k)] != 0.0) continue;
    auto zero_span = [&](std::span<const double> s) {
      auto off = std::size_t(s.data() - model.params.data());
      std::fill_n(out.fisher.begin() + long(off), s.size(), 0.0);
    };
    zero_span(model.w_in(k));
    zero_span(model.b_in(k));
    zero_span(model.w_hid(k));
    zero_span(model.b_hid(k));
    zero_span(model.w_head(k));
    out.fisher[model.b_head_off + std::size_t(k)] = 0.0;
    for (int row = 0; row < model.grid.d_out; ++row) {
      out.fisher[model.w_out_off + std::size_t(row) * model.grid.neurons +
                 std::size_t(k)] = 0.0;
    }
  }
  return out;
}

PenaltyGrad ewc_penalty_grad(const NeuronBank& model,
                             const std::vector<EwcAnchor>& anchors) {
  PenaltyGrad out;
  for (const auto& a : anchors) {
    if (a.lambda == 0.0) continue;
    if (a.anchor.size() != model.params.size() ||
        a.fisher.size() != model.params.size()) {
      throw config_error("ewc penalty: anchor shape mismatch");
    }
    if (out.grad.empty()) out.grad.assign(model.params.size(), 0.0);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      const double d = model.params[i] - a.anchor[i];
      out.grad[i] += a.lambda * a.fisher[i] * d;
      out.penalty += 0.5 * a.lambda * a.fisher[i] * d * d;
    }
  }
  return out;
}

void save_anchor(const EwcAnchor& anchor, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw data_error("anchor: cannot open " + path + " for write");
  f.write("FTNA", 4);
  std::uint32_t task = std::uint32_t(anchor.task_index);
  std::uint64_t n = anchor.anchor.size();
  f.write(reinterpret_cast<const char*>(&task), sizeof(task));
  f.write(reinterpret_cast<const char*>(&n), sizeof(n));
  f.write(reinterpret_cast<const char*>(&anchor.lambda),
          sizeof(anchor.lambda));
  f.write(reinterpret_cast<const char*>(anchor.anchor.data()),
          std::streamsize(n * sizeof(double)));
  f.write(reinterpret_cast<const char*>(anchor.fisher.data()),
          std::streamsize(n * sizeof(double)));
  if (!f) throw data_error("anchor: write failed on " + path);
}

EwcAnchor load_anchor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("anchor: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "FTNA", 4) != 0) {
    throw data_error("anchor: bad magic in " + path);
  }
  std::uint32_t task = 0;
  std::uint64_t n = 0;
  EwcAnchor a;
  f.read(reinterpret_cast<char*>(&task), sizeof(task));
  f.read(reinterpret_cast<char*>(&n), sizeof(n));
  f.read(reinterpret_cast<char*>(&a.lambda), sizeof(a.lambda));
  if (!f) throw data_error("anchor: truncated header in " + path);
  a.task_index = int(task);
  a.anchor.resize(n);
  a.fisher.resize(n);
  f.read(reinterpret_cast<char*>(a.anchor.data()),
         std::streamsize(n * sizeof(double)));
  f.read(reinterpret_cast<char*>(a.fisher.data()),
         std::streamsize(n * sizeof(double)));
  if (!f) throw data_error("anchor: truncated tensors in " + path);
  return a;
}

}  // namespace ftn

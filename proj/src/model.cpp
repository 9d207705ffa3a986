#include "ftn/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ftn/digest.hpp"
#include "ftn/errors.hpp"
#include "ftn/threads.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace ftn {

namespace {

using MatCM = Eigen::MatrixXd;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::Map;
using Eigen::VectorXd;

// Neuron-chunk width for parallel loops; one chunk = one GEMM over the
// chunk's input-layer rows.
constexpr int kNeuronChunk = 32;

// Column chunk for the streaming evaluation path.
constexpr int kEvalChunk = 2048;

}  // namespace

NeuronBank NeuronBank::with_layout(const GridSpec& grid) {
  grid.validate();
  NeuronBank m;
  m.grid = grid;
  const std::size_t h = grid.neurons;
  std::size_t off = 0;
  m.w_in_off = off;
  off += h * m.w_in_len();
  m.b_in_off = off;
  off += h * grid.inner;
  m.w_hid_off = off;
  off += h * m.w_hid_len();
  m.b_hid_off = off;
  off += h * m.b_hid_len();
  m.w_head_off = off;
  off += h * grid.inner;
  m.b_head_off = off;
  off += h;
  m.w_out_off = off;
  off += std::size_t(grid.d_out) * h;
  m.params.assign(off, 0.0);
  return m;
}

NeuronBank init_model(const GridSpec& grid, RngStream& rng) {
  NeuronBank m = NeuronBank::with_layout(grid);
  auto fill_uniform = [&](std::size_t off, std::size_t n, int fan_in) {
    const double a = std::sqrt(1.0 / fan_in);
    for (std::size_t i = 0; i < n; ++i) {
      m.params[off + i] = rng.uniform(-a, a);
    }
  };
  const std::size_t h = grid.neurons;
  fill_uniform(m.w_in_off, h * m.w_in_len(), grid.d_in);
  // biases stay zero
  fill_uniform(m.w_hid_off, h * m.w_hid_len(), grid.inner);
  fill_uniform(m.w_head_off, h * grid.inner, grid.inner);
  fill_uniform(m.w_out_off, std::size_t(grid.d_out) * h, grid.neurons);
  return m;
}

std::vector<double> forward(const NeuronBank& model, std::span<const double> x,
                            int batch, std::span<const double> gates,
                            RunMode mode, RngStream* dropout_rng,
                            ForwardCache& cache) {
  const GridSpec& g = model.grid;
  const int h = g.neurons, inner = g.inner, layers = g.layers;
  if (batch < 1) throw config_error("forward: batch must be >= 1");
  if (x.size() != std::size_t(batch) * g.d_in) {
    throw config_error("forward: input shape mismatch");
  }
  if (gates.size() != std::size_t(h)) {
    throw config_error("forward: mask length != neuron count");
  }
  for (double gv : gates) {
    if (!(gv >= 0.0 && gv <= 1.0)) {
      throw config_error("forward: gates must lie in [0, 1]");
    }
  }

  cache.batch = batch;
  cache.mode = mode;
  cache.model_revision = model.revision;
  cache.input.assign(x.begin(), x.end());
  cache.gates.assign(gates.begin(), gates.end());
  cache.act.resize(layers);
  for (auto& plane : cache.act) {
    plane.resize(std::size_t(h) * inner * batch);
  }
  cache.outputs.resize(std::size_t(batch) * h);

  // Inverted dropout multipliers, drawn in fixed (sample, neuron) order.
  const bool use_drop = (mode == RunMode::train && g.dropout_p > 0.0);
  if (use_drop) {
    if (dropout_rng == nullptr) {
      throw usage_error("forward: train mode with dropout needs an rng");
    }
    cache.drop.resize(std::size_t(batch) * h);
    const double keep = 1.0 - g.dropout_p;
    const double inv_keep = 1.0 / keep;
    for (std::size_t i = 0; i < cache.drop.size(); ++i) {
      cache.drop[i] = dropout_rng->next_double() < g.dropout_p ? 0.0 : inv_keep;
    }
  } else {
    cache.drop.clear();
  }

  // x is [batch, d_in] row-major == [d_in, batch] col-major.
  Map<const MatCM> xm(cache.input.data(), g.d_in, batch);
  Map<const MatRM> w_in_all(model.params.data() + model.w_in_off,
                            std::size_t(h) * inner, g.d_in);
  Map<const VectorXd> b_in_all(model.params.data() + model.b_in_off,
                               std::size_t(h) * inner);
  Map<MatCM> plane0(cache.act[0].data(), std::size_t(h) * inner, batch);

  const int chunks = (h + kNeuronChunk - 1) / kNeuronChunk;
  parallel_for(
      chunks,
      [&](int c) {
        int k0 = c * kNeuronChunk;
        int k1 = std::min(h, k0 + kNeuronChunk);
        int rows0 = k0 * inner, nrows = (k1 - k0) * inner;
        plane0.middleRows(rows0, nrows) =
            (((w_in_all.middleRows(rows0, nrows) * xm).colwise() +
              b_in_all.segment(rows0, nrows))
                 .array()
                 .tanh())
                .matrix();
        Map<MatCM> zm(cache.outputs.data(), h, batch);
        for (int k = k0; k < k1; ++k) {
          for (int l = 1; l < layers; ++l) {
            Map<const MatRM> w(model.w_hid(k).data() +
                                   std::size_t(l - 1) * inner * inner,
                               inner, inner);
            Map<const VectorXd> b(
                model.b_hid(k).data() + std::size_t(l - 1) * inner, inner);
            Map<MatCM> prev(cache.act[l - 1].data(), std::size_t(h) * inner,
                            batch);
            Map<MatCM> cur(cache.act[l].data(), std::size_t(h) * inner, batch);
            cur.middleRows(k * inner, inner) =
                (((w * prev.middleRows(k * inner, inner)).colwise() + b)
                     .array()
                     .tanh())
                    .matrix();
          }
          Map<const VectorXd> wh(model.w_head(k).data(), inner);
          Map<MatCM> last(cache.act[layers - 1].data(),
                          std::size_t(h) * inner, batch);
          zm.row(k) = ((wh.transpose() * last.middleRows(k * inner, inner))
                           .array() +
                       model.b_head(k))
                          .matrix();
        }
      },
      1);

  // Gated (and optionally dropped) scalars, then the shared readout.
  Map<const MatCM> zm(cache.outputs.data(), h, batch);
  Map<const VectorXd> gv(cache.gates.data(), h);
  MatCM zg(h, batch);
  if (use_drop) {
    Map<const MatCM> dm(cache.drop.data(), h, batch);
    zg = ((zm.array() * dm.array()).colwise() * gv.array()).matrix();
  } else {
    zg = (zm.array().colwise() * gv.array()).matrix();
  }
  std::vector<double> y(std::size_t(batch) * g.d_out);
  Map<const MatRM> w_out(model.params.data() + model.w_out_off, g.d_out, h);
  Map<MatCM> ym(y.data(), g.d_out, batch);
  ym = w_out * zg;
  cache.valid = true;
  return y;
}

Gradients backward(const NeuronBank& model, const ForwardCache& cache,
                   std::span<const double> d_loss_d_y,
                   bool accumulate_squares) {
  const GridSpec& g = model.grid;
  const int h = g.neurons, inner = g.inner, layers = g.layers;
  const int batch = cache.batch;
  if (!cache.valid || cache.model_revision != model.revision) {
    throw usage_error("backward: stale forward cache");
  }
  if (d_loss_d_y.size() != std::size_t(batch) * g.d_out) {
    throw config_error("backward: output gradient shape mismatch");
  }
  const bool sq = accumulate_squares;

  Gradients out;
  out.params.assign(model.params.size(), 0.0);
  out.mask_logits.assign(h, 0.0);

  Map<const MatCM> dy(d_loss_d_y.data(), g.d_out, batch);
  Map<const MatRM> w_out(model.params.data() + model.w_out_off, g.d_out, h);
  Map<const MatCM> zm(cache.outputs.data(), h, batch);
  Map<const VectorXd> gv(cache.gates.data(), h);
  const bool use_drop = !cache.drop.empty();

  // u = dropout(z); zg = u * gates.
  MatCM u(h, batch);
  if (use_drop) {
    Map<const MatCM> dm(cache.drop.data(), h, batch);
    u = (zm.array() * dm.array()).matrix();
  } else {
    u = zm;
  }
  MatCM zg = (u.array().colwise() * gv.array()).matrix();

  Map<MatRM> g_w_out(out.params.data() + model.w_out_off, g.d_out, h);
  if (sq) {
    g_w_out = dy.array().square().matrix() *
              zg.array().square().matrix().transpose();
  } else {
    g_w_out = dy * zg.transpose();
  }

  // d loss / d zg, shared by the mask-logit path and the neuron chain.
  MatCM dzhat = w_out.transpose() * dy;
  if (!sq) {
    // d loss / d gate_k summed over the batch, then through sigma:
    // gates came from sigmoid(logits), so sigma' = g (1 - g).
    for (int k = 0; k < h; ++k) {
      double acc = (dzhat.row(k).array() * u.row(k).array()).sum();
      out.mask_logits[k] = acc * (gv[k] * (1.0 - gv[k]));
    }
  }

  // d loss / d z (through gate and dropout).
  MatCM dz = (dzhat.array().colwise() * gv.array()).matrix();
  if (use_drop) {
    Map<const MatCM> dm(cache.drop.data(), h, batch);
    dz = (dz.array() * dm.array()).matrix();
  }

  // Per-neuron chain; pre-activation gradients of the input layer land in
  // one plane so the input-layer weight gradient is a single GEMM per chunk.
  std::vector<double> dpre0_buf(std::size_t(h) * inner * batch);
  Map<MatCM> dpre0(dpre0_buf.data(), std::size_t(h) * inner, batch);

  const int chunks = (h + kNeuronChunk - 1) / kNeuronChunk;
  parallel_for(
      chunks,
      [&](int c) {
        int k0 = c * kNeuronChunk;
        int k1 = std::min(h, k0 + kNeuronChunk);
        MatCM dact(inner, batch), dpre(inner, batch);
        for (int k = k0; k < k1; ++k) {
          Map<const MatCM> last(cache.act[layers - 1].data(),
                                std::size_t(h) * inner, batch);
          auto a_last = last.middleRows(k * inner, inner);
          Map<const VectorXd> wh(model.w_head(k).data(), inner);
          auto dz_row = dz.row(k);

          Map<VectorXd> g_wh(out.params.data() + model.w_head_off +
                                 std::size_t(k) * inner,
                             inner);
          if (sq) {
            g_wh = a_last.array().square().matrix() *
                   dz_row.array().square().matrix().transpose();
            out.params[model.b_head_off + k] = dz_row.array().square().sum();
          } else {
            g_wh = a_last * dz_row.transpose();
            out.params[model.b_head_off + k] = dz_row.sum();
          }
          dact = wh * dz_row;

          for (int l = layers - 1; l >= 1; --l) {
            Map<const MatCM> cur(cache.act[l].data(), std::size_t(h) * inner,
                                 batch);
            Map<const MatCM> prev(cache.act[l - 1].data(),
                                  std::size_t(h) * inner, batch);
            auto a_cur = cur.middleRows(k * inner, inner);
            auto a_prev = prev.middleRows(k * inner, inner);
            dpre = (dact.array() * (1.0 - a_cur.array().square())).matrix();
            Map<MatRM> g_w(out.params.data() + model.w_hid_off +
                               k * model.w_hid_len() +
                               std::size_t(l - 1) * inner * inner,
                           inner, inner);
            Map<VectorXd> g_b(out.params.data() + model.b_hid_off +
                                  k * model.b_hid_len() +
                                  std::size_t(l - 1) * inner,
                              inner);
            if (sq) {
              g_w = dpre.array().square().matrix() *
                    a_prev.array().square().matrix().transpose();
              g_b = dpre.array().square().rowwise().sum().matrix();
            } else {
              g_w = dpre * a_prev.transpose();
              g_b = dpre.rowwise().sum();
            }
            Map<const MatRM> w(model.w_hid(k).data() +
                                   std::size_t(l - 1) * inner * inner,
                               inner, inner);
            dact = w.transpose() * dpre;
          }

          Map<const MatCM> first(cache.act[0].data(), std::size_t(h) * inner,
                                 batch);
          auto a0 = first.middleRows(k * inner, inner);
          dpre0.middleRows(k * inner, inner) =
              (dact.array() * (1.0 - a0.array().square())).matrix();
        }
      },
      1);

  Map<const MatCM> xm(cache.input.data(), g.d_in, batch);
  Map<MatRM> g_w_in(out.params.data() + model.w_in_off,
                    std::size_t(h) * inner, g.d_in);
  Map<VectorXd> g_b_in(out.params.data() + model.b_in_off,
                       std::size_t(h) * inner);
  if (sq) {
    MatCM x_sq = xm.array().square().matrix();
    MatCM dpre0_sq = dpre0.array().square().matrix();
    parallel_for(
        chunks,
        [&](int c) {
          int r0 = c * kNeuronChunk * inner;
          int nr = std::min<int>(h * inner - r0, kNeuronChunk * inner);
          g_w_in.middleRows(r0, nr) =
              dpre0_sq.middleRows(r0, nr) * x_sq.transpose();
          g_b_in.segment(r0, nr) = dpre0_sq.middleRows(r0, nr).rowwise().sum();
        },
        1);
  } else {
    parallel_for(
        chunks,
        [&](int c) {
          int r0 = c * kNeuronChunk * inner;
          int nr = std::min<int>(h * inner - r0, kNeuronChunk * inner);
          g_w_in.middleRows(r0, nr) = dpre0.middleRows(r0, nr) * xm.transpose();
          g_b_in.segment(r0, nr) = dpre0.middleRows(r0, nr).rowwise().sum();
        },
        1);
  }
  return out;
}

std::vector<double> neuron_outputs(const NeuronBank& model,
                                   std::span<const double> x, int batch) {
  const GridSpec& g = model.grid;
  const int h = g.neurons, inner = g.inner, layers = g.layers;
  if (x.size() != std::size_t(batch) * g.d_in || batch < 1) {
    throw config_error("neuron_outputs: input shape mismatch");
  }
  std::vector<double> z(std::size_t(batch) * h);
  Map<const MatRM> w_in_all(model.params.data() + model.w_in_off,
                            std::size_t(h) * inner, g.d_in);
  Map<const VectorXd> b_in_all(model.params.data() + model.b_in_off,
                               std::size_t(h) * inner);

  for (int b0 = 0; b0 < batch; b0 += kEvalChunk) {
    const int cb = std::min(kEvalChunk, batch - b0);
    Map<const MatCM> xm(x.data() + std::size_t(b0) * g.d_in, g.d_in, cb);
    std::vector<double> ping(std::size_t(h) * inner * cb);
    std::vector<double> pong(std::size_t(h) * inner * cb);
    Map<MatCM> p0(ping.data(), std::size_t(h) * inner, cb);

    const int chunks = (h + kNeuronChunk - 1) / kNeuronChunk;
    parallel_for(
        chunks,
        [&](int c) {
          int k0 = c * kNeuronChunk;
          int k1 = std::min(h, k0 + kNeuronChunk);
          int rows0 = k0 * inner, nrows = (k1 - k0) * inner;
          p0.middleRows(rows0, nrows) =
              (((w_in_all.middleRows(rows0, nrows) * xm).colwise() +
                b_in_all.segment(rows0, nrows))
                   .array()
                   .tanh())
                  .matrix();
          Map<MatCM> zm(z.data() + std::size_t(b0) * h, h, cb);
          for (int k = k0; k < k1; ++k) {
            double* cur_plane = ping.data();
            double* next_plane = pong.data();
            for (int l = 1; l < layers; ++l) {
              Map<const MatRM> w(model.w_hid(k).data() +
                                     std::size_t(l - 1) * inner * inner,
                                 inner, inner);
              Map<const VectorXd> bb(
                  model.b_hid(k).data() + std::size_t(l - 1) * inner, inner);
              Map<const MatCM> prev(cur_plane, std::size_t(h) * inner, cb);
              Map<MatCM> cur(next_plane, std::size_t(h) * inner, cb);
              cur.middleRows(k * inner, inner) =
                  (((w * prev.middleRows(k * inner, inner)).colwise() + bb)
                       .array()
                       .tanh())
                      .matrix();
              std::swap(cur_plane, next_plane);
            }
            Map<const MatCM> last(cur_plane, std::size_t(h) * inner, cb);
            Map<const VectorXd> wh(model.w_head(k).data(), inner);
            zm.row(k) = ((wh.transpose() * last.middleRows(k * inner, inner))
                             .array() +
                         model.b_head(k))
                            .matrix();
          }
        },
        1);
  }
  return z;
}

std::vector<double> readout_with_gates(const NeuronBank& model,
                                       std::span<const double> z, int batch,
                                       std::span<const double> gates) {
  const GridSpec& g = model.grid;
  const int h = g.neurons;
  if (z.size() != std::size_t(batch) * h || gates.size() != std::size_t(h)) {
    throw config_error("readout: shape mismatch");
  }
  Map<const MatCM> zm(z.data(), h, batch);
  Map<const VectorXd> gv(gates.data(), h);
  MatCM zg = (zm.array().colwise() * gv.array()).matrix();
  std::vector<double> y(std::size_t(batch) * g.d_out);
  Map<const MatRM> w_out(model.params.data() + model.w_out_off, g.d_out, h);
  Map<MatCM> ym(y.data(), g.d_out, batch);
  ym = w_out * zg;
  return y;
}

double train_step(NeuronBank& model, std::span<const double> x, int batch,
                  const Targets& targets, LossKind kind, const Mask& mask,
                  AdamState& opt, RngStream& dropout_rng, ForwardCache& cache,
                  std::span<const double> extra_param_grad) {
  for (double gv : mask.gates) {
    if (gv != 0.0 && gv != 1.0) {
      throw usage_error("train_step: mask must be binary");
    }
  }
  std::vector<double> y =
      forward(model, x, batch, mask.gates, RunMode::train, &dropout_rng, cache);
  LossGrad lg = loss_and_grad(kind, y, batch, model.grid.d_out, targets);
  if (!std::isfinite(lg.loss)) {
    throw numeric_error("train_step: non-finite loss");
  }
  Gradients grads = backward(model, cache, lg.grad);
  if (!extra_param_grad.empty()) {
    if (extra_param_grad.size() != grads.params.size()) {
      throw config_error("train_step: extra gradient shape mismatch");
    }
    for (std::size_t i = 0; i < grads.params.size(); ++i) {
      grads.params[i] += extra_param_grad[i];
    }
  }
  adam_step(opt, model.params, grads.params);
  model.revision += 1;
  return lg.loss;
}

std::string param_fingerprint(const NeuronBank& model,
                              std::span<const int> neuron_set) {
  std::vector<int> ks(neuron_set.begin(), neuron_set.end());
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  Sha256 hsh;
  for (int k : ks) {
    if (k < 0 || k >= model.grid.neurons) {
      throw config_error("param_fingerprint: neuron index out of range");
    }
    std::uint64_t idx = static_cast<std::uint64_t>(k);
    hsh.update(&idx, sizeof(idx));
    hsh.update(model.w_in(k));
    hsh.update(model.b_in(k));
    hsh.update(model.w_hid(k));
    hsh.update(model.b_hid(k));
    hsh.update(model.w_head(k));
    double bh = model.b_head(k);
    hsh.update(&bh, sizeof(bh));
    for (int r = 0; r < model.grid.d_out; ++r) {
      double w = model.w_out(r, k);
      hsh.update(&w, sizeof(w));
    }
  }
  return hsh.hex();
}

void save_checkpoint(const NeuronBank& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw data_error("checkpoint: cannot open " + path + " for write");
  f.write("FTN1", 4);
  const GridSpec& g = model.grid;
  std::uint32_t dims[6] = {
      std::uint32_t(g.side),   std::uint32_t(g.neurons),
      std::uint32_t(g.layers), std::uint32_t(g.inner),
      std::uint32_t(g.d_in),   std::uint32_t(g.d_out)};
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  f.write(reinterpret_cast<const char*>(model.params.data()),
          std::streamsize(model.params.size() * sizeof(double)));
  if (!f) throw data_error("checkpoint: write failed on " + path);
}

NeuronBank load_checkpoint(const std::string& path, int winners,
                           double dropout_p) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "FTN1", 4) != 0) {
    throw data_error("checkpoint: bad magic in " + path);
  }
  std::uint32_t dims[6];
  f.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!f) throw data_error("checkpoint: truncated header in " + path);
  GridSpec g;
  g.side = int(dims[0]);
  g.neurons = int(dims[1]);
  g.layers = int(dims[2]);
  g.inner = int(dims[3]);
  g.d_in = int(dims[4]);
  g.d_out = int(dims[5]);
  g.winners = winners;
  g.dropout_p = dropout_p;
  NeuronBank m = NeuronBank::with_layout(g);
  f.read(reinterpret_cast<char*>(m.params.data()),
         std::streamsize(m.params.size() * sizeof(double)));
  if (!f || f.gcount() !=
                std::streamsize(m.params.size() * sizeof(double))) {
    throw data_error("checkpoint: truncated tensor block in " + path);
  }
  return m;
}

}  // namespace ftn

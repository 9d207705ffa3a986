#include "ftn/ewc.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "ftn/errors.hpp"
#include "ftn/rng.hpp"
#include "util.hpp"

using namespace ftn;
using testutil::bits_equal;

namespace {

NeuronBank small_model(int seed) {
  GridSpec g;
  g.side = 2;
  g.neurons = 4;
  g.winners = 2;
  g.layers = 2;
  g.inner = 3;
  g.d_in = 2;
  g.d_out = 2;
  g.dropout_p = 0.0;
  RngStream r(seed, StreamPurpose::init);
  return init_model(g, r);
}

Mask mask_on(const GridSpec& g, std::vector<int> on) {
  Mask m;
  m.gates.assign(g.neurons, 0.0);
  for (int k : on) m.gates[std::size_t(k)] = 1.0;
  m.side = g.side;
  return m;
}

}  // namespace

TEST_CASE("fisher is zero at a perfectly fit optimum") {
  NeuronBank m = small_model(1);
  Mask msk = mask_on(m.grid, {0, 1, 2, 3});
  RngStream dx(2, StreamPurpose::fisher_data);
  SampleBatch b;
  b.batch = 6;
  b.x = dx.uniform(std::size_t(b.batch) * m.grid.d_in, -1.0, 1.0);
  ForwardCache c;
  b.targets.values =
      forward(m, b.x, b.batch, msk.gates, RunMode::eval, nullptr, c);
  auto anchor = estimate_fisher(m, {b}, LossKind::mse, msk, 0, 400.0);
  for (double f : anchor.fisher) CHECK(f == 0.0);
  CHECK(anchor.task_index == 0);
  CHECK(anchor.lambda == 400.0);
  CHECK(bits_equal(anchor.anchor, m.params));
}

TEST_CASE("fisher is nonnegative and matches per-sample brute force") {
  NeuronBank m = small_model(3);
  Mask msk = mask_on(m.grid, {0, 2, 3});
  RngStream dx(4, StreamPurpose::fisher_data);
  const int batch = 3;
  SampleBatch b;
  b.batch = batch;
  b.x = dx.uniform(std::size_t(batch) * m.grid.d_in, -1.0, 1.0);
  for (int i = 0; i < batch; ++i) b.targets.classes.push_back(int(dx.below(2)));

  auto anchor = estimate_fisher(m, {b}, LossKind::cross_entropy, msk, 1, 10.0);
  for (double f : anchor.fisher) CHECK(f >= 0.0);

  // Brute force: one backward per sample on that sample's log-likelihood
  // gradient, squared, averaged.
  std::vector<double> want(m.params.size(), 0.0);
  for (int s = 0; s < batch; ++s) {
    std::vector<double> xs(b.x.begin() + s * m.grid.d_in,
                           b.x.begin() + (s + 1) * m.grid.d_in);
    Targets ts;
    ts.classes = {b.targets.classes[std::size_t(s)]};
    ForwardCache c;
    auto y = forward(m, xs, 1, msk.gates, RunMode::eval, nullptr, c);
    auto dy = loglik_grad_per_sample(LossKind::cross_entropy, y, 1,
                                     m.grid.d_out, ts);
    auto g = backward(m, c, dy);
    for (std::size_t i = 0; i < want.size(); ++i) {
      want[i] += g.params[i] * g.params[i];
    }
  }
  for (auto& w : want) w /= double(batch);
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    worst = std::max(worst, std::abs(want[i] - anchor.fisher[i]));
  }
  CHECK(worst < 1e-14);

  // Neuron 1 is gated off; its whole slice carries zero Fisher.
  NeuronBank view = m;
  view.params = anchor.fisher;
  for (double v : view.w_in(1)) CHECK(v == 0.0);
  for (double v : view.w_hid(1)) CHECK(v == 0.0);
  for (double v : view.w_head(1)) CHECK(v == 0.0);
  CHECK(view.b_head(1) == 0.0);
  for (int row = 0; row < m.grid.d_out; ++row) CHECK(view.w_out(row, 1) == 0.0);

  CHECK_THROWS_AS(estimate_fisher(m, {}, LossKind::mse, msk, 0, 1.0),
                  usage_error);
}

TEST_CASE("penalty closed form") {
  NeuronBank m = small_model(5);
  Mask msk = mask_on(m.grid, {0, 1});
  RngStream dx(6, StreamPurpose::fisher_data);
  SampleBatch b;
  b.batch = 4;
  b.x = dx.uniform(std::size_t(b.batch) * m.grid.d_in, -1.0, 1.0);
  b.targets.values = dx.uniform(std::size_t(b.batch) * m.grid.d_out, -1., 1.);
  auto anchor = estimate_fisher(m, {b}, LossKind::mse, msk, 0, 7.5);

  // At the anchor itself the penalty vanishes.
  auto at_anchor = ewc_penalty_grad(m, {anchor});
  CHECK(at_anchor.penalty == 0.0);
  for (double g : at_anchor.grad) CHECK(g == 0.0);

  // Perturb one coordinate: penalty = lambda f d^2 / 2, grad = lambda f d.
  std::size_t i = m.w_in_off + 3;
  REQUIRE(anchor.fisher[i] > 0.0);
  const double d = 0.25;
  m.params[i] += d;
  auto moved = ewc_penalty_grad(m, {anchor});
  CHECK(moved.penalty ==
        doctest::Approx(0.5 * 7.5 * anchor.fisher[i] * d * d).epsilon(1e-14));
  CHECK(moved.grad[i] ==
        doctest::Approx(7.5 * anchor.fisher[i] * d).epsilon(1e-14));
  for (std::size_t j = 0; j < moved.grad.size(); ++j) {
    if (j != i) CHECK(moved.grad[j] == 0.0);
  }

  // Two identical anchors double both outputs.
  auto doubled = ewc_penalty_grad(m, {anchor, anchor});
  CHECK(doubled.penalty == doctest::Approx(2.0 * moved.penalty).epsilon(1e-14));
  CHECK(doubled.grad[i] == doctest::Approx(2.0 * moved.grad[i]).epsilon(1e-14));
}

TEST_CASE("no anchors and zero lambda contribute nothing") {
  NeuronBank m = small_model(7);
  auto none = ewc_penalty_grad(m, {});
  CHECK(none.penalty == 0.0);
  CHECK(none.grad.empty());

  EwcAnchor zero;
  zero.lambda = 0.0;
  zero.anchor = m.params;
  zero.fisher.assign(m.params.size(), 1.0);
  m.params[0] += 1.0;
  auto skipped = ewc_penalty_grad(m, {zero});
  CHECK(skipped.penalty == 0.0);
  CHECK(skipped.grad.empty());
}

TEST_CASE("anchors round-trip through disk") {
  NeuronBank m = small_model(9);
  Mask msk = mask_on(m.grid, {1, 3});
  RngStream dx(10, StreamPurpose::fisher_data);
  SampleBatch b;
  b.batch = 5;
  b.x = dx.uniform(std::size_t(b.batch) * m.grid.d_in, -1.0, 1.0);
  b.targets.values = dx.uniform(std::size_t(b.batch) * m.grid.d_out, -1., 1.);
  auto anchor = estimate_fisher(m, {b}, LossKind::mse, msk, 2, 400.0);

  auto dir = std::filesystem::temp_directory_path() / "ftn_anchor_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "task2.anchor").string();
  save_anchor(anchor, path);
  auto back = load_anchor(path);
  CHECK(back.task_index == 2);
  CHECK(back.lambda == 400.0);
  CHECK(bits_equal(back.anchor, anchor.anchor));
  CHECK(bits_equal(back.fisher, anchor.fisher));
  CHECK_THROWS_AS(load_anchor((dir / "nope.anchor").string()), data_error);
  std::filesystem::remove_all(dir);
}

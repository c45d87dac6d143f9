#include <cmath>
#include <vector>

#include "doctest.h"
#include "treenmt/adam.hpp"
#include "treenmt/grad_check.hpp"
#include "treenmt/ops.hpp"
#include "treenmt/rng.hpp"
#include "treenmt/tensor.hpp"

using namespace treenmt;
namespace op = treenmt::ops;

using DT = Tensor<double>;

namespace {

DT random_tensor(Shape shape, RngStream& rng, double scale = 1.0) {
  DT t = DT::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-scale, scale);
  return t;
}

// Scalar readout with distinct per-element weights so transposition bugs
// cannot cancel out.
DT readout(Tape<double>* tape, const DT& x, uint64_t seed) {
  RngStream rng(seed);
  DT w = DT::zeros(x.shape());
  for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
  return op::sum_all(tape, op::mul_const(tape, x, w));
}

}  // namespace

TEST_CASE("matmul: identity and hand values") {
  DT a = DT::from_values({2, 2}, {1, 2, 3, 4});
  DT eye = DT::from_values({2, 2}, {1, 0, 0, 1});
  DT ai = op::matmul<double>(nullptr, a, eye);
  CHECK(std::vector<double>(ai.values().begin(), ai.values().end()) ==
        std::vector<double>{1, 2, 3, 4});

  DT ones = DT::from_values({2, 1}, {1, 1});
  DT prod = op::matmul<double>(nullptr, a, ones);
  CHECK(prod.values()[0] == doctest::Approx(3));
  CHECK(prod.values()[1] == doctest::Approx(7));
}

TEST_CASE("matmul: shape mismatch throws") {
  DT a = DT::zeros({2, 3});
  DT b = DT::zeros({4, 2});
  CHECK_THROWS_AS(op::matmul<double>(nullptr, a, b), ShapeError);
}

TEST_CASE("softmax_rows: hand values and stability") {
  DT x = DT::from_values({2}, {0, 0});
  auto y = op::softmax_rows<double>(nullptr, x);
  CHECK(y.values()[0] == doctest::Approx(0.5));
  CHECK(y.values()[1] == doctest::Approx(0.5));

  DT big = DT::from_values({2}, {1000, 1000});
  auto yb = op::softmax_rows<double>(nullptr, big);
  CHECK(yb.values()[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(yb.values()[1]));

  DT z = DT::from_values({2}, {0, std::log(3.0)});
  auto yz = op::softmax_rows<double>(nullptr, z);
  CHECK(yz.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(yz.values()[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax_rows: rows sum to 1 within 1e-12") {
  RngStream rng(5);
  DT x = random_tensor({7, 11, 13}, rng, 8.0);
  auto y = op::softmax_rows<double>(nullptr, x);
  for (int64_t r = 0; r < 7 * 11; ++r) {
    double sum = 0;
    for (int64_t j = 0; j < 13; ++j) sum += y.values()[r * 13 + j];
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("layer_norm: hand values") {
  DT gain = DT::full({2}, 1.0);
  DT bias = DT::zeros({2});

  DT constant = DT::from_values({1, 2}, {5, 5});
  auto yc = op::layer_norm<double>(nullptr, constant, gain, bias);
  CHECK(yc.values()[0] == doctest::Approx(0.0));
  CHECK(yc.values()[1] == doctest::Approx(0.0));

  DT row = DT::from_values({1, 2}, {1, 3});
  auto yr = op::layer_norm<double>(nullptr, row, gain, bias);
  CHECK(yr.values()[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(yr.values()[1] == doctest::Approx(1.0).epsilon(1e-4));

  DT zero_gain = DT::zeros({2});
  DT b = DT::full({2}, 0.7);
  auto yz = op::layer_norm<double>(nullptr, row, zero_gain, b);
  CHECK(yz.values()[0] == doctest::Approx(0.7));
  CHECK(yz.values()[1] == doctest::Approx(0.7));
}

TEST_CASE("cross_entropy_per_sample: hand values") {
  const int64_t V = 5;
  // uniform logits -> ln V per row
  DT logits = DT::zeros({2, 3, V});
  TokenMatrix targets(2, 3, 0);
  for (auto& id : targets.ids) id = 2;
  auto ce = op::cross_entropy_per_sample<double>(nullptr, logits, targets, /*pad=*/0);
  CHECK(ce.values()[0] == doctest::Approx(std::log(static_cast<double>(V))));
  CHECK(ce.values()[1] == doctest::Approx(std::log(static_cast<double>(V))));

  // perfect prediction limit
  DT sharp = DT::zeros({1, 2, V});
  for (int64_t t = 0; t < 2; ++t) sharp.data()[t * V + 3] = 50.0;
  TokenMatrix tgt3(1, 2, 3);
  auto ce_sharp = op::cross_entropy_per_sample<double>(nullptr, sharp, tgt3, 0);
  CHECK(ce_sharp.values()[0] == doctest::Approx(0.0).epsilon(1e-12));

  // two tokens with logits [0, ln 3], target class 1 -> -ln 0.75 per token
  DT two = DT::zeros({1, 2, 2});
  two.data()[1] = std::log(3.0);
  two.data()[3] = std::log(3.0);
  TokenMatrix tgt1(1, 2, 1);
  auto ce_two = op::cross_entropy_per_sample<double>(nullptr, two, tgt1, 0);
  CHECK(ce_two.values()[0] == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("cross_entropy_per_sample: pad handling and errors") {
  DT logits = DT::zeros({2, 2, 4});
  TokenMatrix targets(2, 2, 0);  // row 0 all pad
  targets.at(1, 0) = 1;
  auto ce = op::cross_entropy_per_sample<double>(nullptr, logits, targets, 0);
  CHECK(ce.values()[0] == 0.0);
  CHECK(ce.values()[1] == doctest::Approx(std::log(4.0)));
  CHECK(ce.values()[1] >= 0.0);

  TokenMatrix bad(2, 2, 0);
  bad.at(0, 0) = 9;
  CHECK_THROWS_AS(op::cross_entropy_per_sample<double>(nullptr, logits, bad, 0), ShapeError);
}

TEST_CASE("backward: sum gives ones, sum of squares gives 2x") {
  RngStream rng(11);
  DT x = random_tensor({3, 4}, rng);
  x.set_requires_grad(true);

  Tape<double> tape;
  auto loss = op::sum_all(&tape, x);
  tape.backward(loss);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));

  x.zero_grad();
  Tape<double> tape2;
  auto loss2 = op::sum_all(&tape2, op::mul(&tape2, x, x));
  tape2.backward(loss2);
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]));
  }
}

TEST_CASE("backward: non-scalar loss rejected") {
  DT x = DT::zeros({2, 2});
  x.set_requires_grad(true);
  Tape<double> tape;
  auto y = op::relu(&tape, x);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  DT p = DT::from_values({3}, {1.0, -2.0, 0.5});
  p.set_requires_grad(true);
  Adam<double> adam({p});
  p.grad();  // allocate zeros
  adam.step(1e-3);
  CHECK(p.values()[0] == doctest::Approx(1.0));
  CHECK(p.values()[1] == doctest::Approx(-2.0));
  CHECK(p.values()[2] == doctest::Approx(0.5));
  CHECK(adam.step_count() == 1);
}

TEST_CASE("adam: first step moves by ~lr*sign(g)") {
  DT p = DT::zeros({2});
  p.set_requires_grad(true);
  Adam<double> adam({p});
  auto g = p.grad();
  g[0] = 0.37;
  g[1] = -4.2;
  const double lr = 1e-3;
  adam.step(lr);
  // bias-corrected first step: update = lr * g / (|g| + eps') ~ lr * sign(g)
  CHECK(p.values()[0] == doctest::Approx(-lr).epsilon(1e-4));
  CHECK(p.values()[1] == doctest::Approx(lr).epsilon(1e-4));
}

TEST_CASE("adam: step counter increments by one per call") {
  DT p = DT::zeros({1});
  p.set_requires_grad(true);
  Adam<double> adam({p});
  for (int i = 1; i <= 5; ++i) {
    p.grad()[0] = 1.0;
    adam.step(1e-3);
    CHECK(adam.step_count() == i);
  }
}

TEST_CASE("grad_check: linear function is exact") {
  RngStream rng(21);
  DT x = random_tensor({4, 3}, rng);
  x.set_requires_grad(true);
  std::vector<DT> params{x};
  // central differences are exact for linear maps at any eps; a large eps
  // avoids cancellation noise
  double err = grad_check(
      [&](Tape<double>* tape) { return readout(tape, op::scale(tape, x, 2.5), 77); },
      params, /*eps=*/1e-2);
  CHECK(err <= 1e-10);
}

TEST_CASE("grad_check: every op passes < 1e-4") {
  RngStream rng(31);

  SUBCASE("matmul") {
    DT a = random_tensor({2, 5, 3}, rng);
    DT b = random_tensor({3, 4}, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    std::vector<DT> params{a, b};
    double err = grad_check(
        [&](Tape<double>* t) { return readout(t, op::matmul(t, a, b), 1); }, params);
    CHECK(err < 1e-6);
  }

  SUBCASE("bmm and bmm_nt") {
    DT a = random_tensor({3, 2, 4}, rng);
    DT b = random_tensor({3, 4, 5}, rng);
    DT c = random_tensor({3, 6, 4}, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    c.set_requires_grad(true);
    std::vector<DT> params{a, b, c};
    double err = grad_check(
        [&](Tape<double>* t) {
          auto u = op::bmm(t, a, b);            // [3,2,5]
          auto v = op::bmm_nt(t, a, c);         // [3,2,6]
          return op::add(t, readout(t, u, 2), readout(t, v, 3));
        },
        params);
    CHECK(err < 1e-6);
  }

  SUBCASE("add, add_bias, mul, scale, relu") {
    DT x = random_tensor({4, 3}, rng);
    DT y = random_tensor({4, 3}, rng);
    DT b = random_tensor({3}, rng);
    x.set_requires_grad(true);
    y.set_requires_grad(true);
    b.set_requires_grad(true);
    std::vector<DT> params{x, y, b};
    double err = grad_check(
        [&](Tape<double>* t) {
          auto s = op::add(t, op::mul(t, x, y), x);
          s = op::add_bias(t, s, b);
          s = op::relu(t, op::scale(t, s, 1.7));
          return readout(t, s, 4);
        },
        params);
    CHECK(err < 1e-4);
  }

  SUBCASE("softmax_rows") {
    DT x = random_tensor({3, 6}, rng, 2.0);
    x.set_requires_grad(true);
    std::vector<DT> params{x};
    double err = grad_check(
        [&](Tape<double>* t) { return readout(t, op::softmax_rows(t, x), 5); }, params);
    CHECK(err < 1e-4);
  }

  SUBCASE("layer_norm") {
    DT x = random_tensor({4, 6}, rng);
    DT g = random_tensor({6}, rng);
    DT b = random_tensor({6}, rng);
    x.set_requires_grad(true);
    g.set_requires_grad(true);
    b.set_requires_grad(true);
    std::vector<DT> params{x, g, b};
    double err = grad_check(
        [&](Tape<double>* t) { return readout(t, op::layer_norm(t, x, g, b), 6); }, params);
    CHECK(err < 1e-4);
  }

  SUBCASE("gather, concat, heads") {
    DT x = random_tensor({5, 2, 6}, rng);
    DT y = random_tensor({3, 2, 6}, rng);
    x.set_requires_grad(true);
    y.set_requires_grad(true);
    std::vector<DT> params{x, y};
    double err = grad_check(
        [&](Tape<double>* t) {
          auto g = op::gather_rows(t, x, {4, 0, 0, 2});
          auto c = op::concat_rows(t, {g, y});
          auto h = op::split_heads(t, c, 3);
          auto m = op::merge_heads(t, h, 3);
          return readout(t, m, 7);
        },
        params);
    CHECK(err < 1e-4);
  }

  SUBCASE("embedding_lookup") {
    DT table = random_tensor({7, 4}, rng);
    table.set_requires_grad(true);
    TokenMatrix ids(2, 3, 0);
    ids.at(0, 0) = 1;
    ids.at(0, 1) = 6;
    ids.at(0, 2) = 1;  // repeated id accumulates
    ids.at(1, 0) = 3;
    std::vector<DT> params{table};
    double err = grad_check(
        [&](Tape<double>* t) { return readout(t, op::embedding_lookup(t, table, ids), 8); },
        params);
    CHECK(err < 1e-4);
  }

  SUBCASE("cross_entropy_per_sample") {
    DT logits = random_tensor({3, 4, 6}, rng, 2.0);
    logits.set_requires_grad(true);
    TokenMatrix targets(3, 4, 0);
    targets.at(0, 0) = 2;
    targets.at(0, 1) = 5;
    targets.at(1, 0) = 1;
    targets.at(1, 1) = 1;
    targets.at(1, 2) = 3;
    // row 2 all pad
    std::vector<DT> params{logits};
    double err = grad_check(
        [&](Tape<double>* t) {
          auto ce = op::cross_entropy_per_sample(t, logits, targets, 0);
          return op::rows_weighted_sum(t, ce, {0.3, 1.1, 0.7});
        },
        params);
    CHECK(err < 1e-4);
  }

  SUBCASE("attention mask and weighted sum") {
    DT scores = random_tensor({4, 2, 3}, rng);  // N=2, H=2
    scores.set_requires_grad(true);
    DT mask = DT::zeros({2, 2, 3});
    mask.data()[2] = -op::kMaskInf;
    std::vector<DT> params{scores};
    double err = grad_check(
        [&](Tape<double>* t) {
          auto masked = op::add_attention_mask(t, scores, mask, 2);
          return readout(t, op::softmax_rows(t, masked), 9);
        },
        params);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("masked softmax puts exactly zero weight on masked positions") {
  DT scores = DT::from_values({1, 1, 3}, {0.3, 0.7, 0.1});
  DT mask = DT::zeros({1, 1, 3});
  mask.data()[1] = -op::kMaskInf;
  auto w = op::softmax_rows<double>(nullptr, op::add_attention_mask<double>(nullptr, scores, mask, 1));
  CHECK(w.values()[1] == 0.0);
  CHECK(w.values()[0] + w.values()[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dropout: eval mode is identity, training mode is seeded") {
  RngStream rng(41);
  DT x = random_tensor({6, 5}, rng);

  RngStream r1(7);
  auto eval_out = op::dropout<double>(nullptr, x, 0.5, r1, /*training=*/false);
  CHECK(eval_out.same_storage(x));

  RngStream r2(7), r3(7);
  auto a = op::dropout<double>(nullptr, x, 0.5, r2, true);
  auto b = op::dropout<double>(nullptr, x, 0.5, r3, true);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(a.values()[i] == b.values()[i]);

  // inverted dropout: kept entries scaled by 1/(1-p)
  bool saw_zero = false, saw_scaled = false;
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (a.values()[i] == 0.0 && x.values()[i] != 0.0) saw_zero = true;
    if (a.values()[i] == doctest::Approx(2.0 * x.values()[i]) && x.values()[i] != 0.0)
      saw_scaled = true;
  }
  CHECK(saw_zero);
  CHECK(saw_scaled);
}

TEST_CASE("debug checks flag non-finite forward values") {
  set_debug_checks(true);
  DT x = DT::from_values({2}, {1.0, 1e308});
  CHECK_THROWS_AS(op::mul<double>(nullptr, x, x), NumericError);
  set_debug_checks(false);
}

TEST_CASE("determinism: identical seeds give bit-identical op outputs") {
  auto run = [](uint64_t seed) {
    RngStream rng(seed);
    DT x = random_tensor({8, 8}, rng);
    DT w = random_tensor({8, 8}, rng);
    RngStream drop(seed + 1);
    auto y = op::matmul<double>(nullptr, x, w);
    y = op::dropout<double>(nullptr, y, 0.1, drop, true);
    return std::vector<double>(y.values().begin(), y.values().end());
  };
  CHECK(run(123) == run(123));
}

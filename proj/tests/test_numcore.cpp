#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mnmt/rng.hpp"
#include "mnmt/tape.hpp"
#include "mnmt/tensor.hpp"

using namespace mnmt;

namespace {

// independent oracle: naive triple loop, double accumulation
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += double(a.at(i, k)) * b.at(k, j);
      c.at(i, j) = float(s);
    }
  }
  return c;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -2.0f,
                     float hi = 2.0f) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// scalar-izes an op output against fixed weights so grad_check sees a
// nontrivial adjoint on every element
VarId weigh(Tape& t, VarId id, const Tensor& w) {
  return t.sum_all(t.mul(id, t.leaf(w)));
}

}  // namespace

TEST_CASE("matmul basics") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {5, 6, 7, 8});
  CHECK(op_matmul(eye, m).data == std::vector<float>{5, 6, 7, 8});

  Tensor a({1, 2}, {1, 2});
  Tensor b({2, 1}, {3, 4});
  CHECK(op_matmul(a, b).data[0] == doctest::Approx(11.0f));
}

TEST_CASE("matmul matches naive oracle on random shapes") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    int m = 1 + int(rng.below(16));
    int k = 1 + int(rng.below(16));
    int n = 1 + int(rng.below(16));
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor got = op_matmul(a, b);
    Tensor want = naive_matmul(a, b);
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a({3, 4});
  Tensor b({5, 2});
  CHECK_THROWS_WITH_AS(op_matmul(a, b),
                       "matmul: dimension mismatch 3x4 times 5x2",
                       std::invalid_argument);
}

TEST_CASE("softmax") {
  SUBCASE("symmetry") {
    Tensor out = op_softmax(Tensor({2}, {0, 0}));
    CHECK(out.data[0] == doctest::Approx(0.5f));
    CHECK(out.data[1] == doctest::Approx(0.5f));
  }
  SUBCASE("no overflow at large inputs") {
    Tensor out = op_softmax(Tensor({2}, {1000, 1000}));
    CHECK(out.data[0] == doctest::Approx(0.5f));
    CHECK(out.all_finite());
  }
  SUBCASE("matches exp/sum oracle") {
    Tensor out = op_softmax(Tensor({3}, {1, 2, 3}));
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(out.data[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-6));
    CHECK(out.data[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-6));
    CHECK(out.data[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-6));
  }
  SUBCASE("sums to one and is shift invariant") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      int n = 1 + int(rng.below(12));
      Tensor x = random_tensor({n}, rng, -5.0f, 5.0f);
      Tensor y = op_softmax(x);
      double sum = 0.0;
      for (float v : y.data) {
        CHECK(v >= 0.0f);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      Tensor shifted = x;
      float delta = rng.uniform(-100.0f, 100.0f);
      for (float& v : shifted.data) v += delta;
      Tensor y2 = op_softmax(shifted);
      for (size_t i = 0; i < y.size(); ++i) {
        CHECK(std::fabs(y.data[i] - y2.data[i]) < 1e-6f);
      }
    }
  }
}

TEST_CASE("cross entropy") {
  SUBCASE("uniform logits give ln(n)") {
    Tensor logits({4}, {1, 1, 1, 1});
    for (int tgt = 0; tgt < 4; ++tgt) {
      CHECK(op_cross_entropy(logits, tgt) ==
            doctest::Approx(std::log(4.0)).epsilon(1e-5));
    }
  }
  SUBCASE("confident correct prediction") {
    CHECK(op_cross_entropy(Tensor({2}, {10, 0}), 0) ==
          doctest::Approx(4.54e-5).epsilon(0.01));
  }
  SUBCASE("gradient is softmax minus one-hot") {
    Tape t;
    VarId logits = t.leaf(Tensor({1, 2}, {3, 3}));
    VarId nll = t.picked_nll(logits, {0}, {1.0f});
    t.backward(t.sum_all(nll));
    CHECK(t.grad(logits).data[0] == doctest::Approx(-0.5f));
    CHECK(t.grad(logits).data[1] == doctest::Approx(0.5f));
  }
  SUBCASE("target out of range") {
    CHECK_THROWS_AS(op_cross_entropy(Tensor({3}, {0, 0, 0}), 3),
                    std::out_of_range);
    CHECK_THROWS_AS(op_cross_entropy(Tensor({3}, {0, 0, 0}), -1),
                    std::out_of_range);
  }
}

TEST_CASE("grad_check on simple closed forms") {
  Tensor x({2}, {1, 2});
  SUBCASE("sum is exactly linear") {
    float err = grad_check([](Tape& t, VarId v) { return t.sum_all(v); }, x,
                           1e-2f);
    CHECK(err < 1e-4f);
  }
  SUBCASE("sum of squares") {
    Tape t;
    VarId v = t.leaf(x);
    VarId out = t.sum_all(t.mul(v, v));
    t.backward(out);
    CHECK(t.grad(v).data[0] == doctest::Approx(2.0f).epsilon(1e-4));
    CHECK(t.grad(v).data[1] == doctest::Approx(4.0f).epsilon(1e-4));
    float err = grad_check(
        [](Tape& t2, VarId v2) { return t2.sum_all(t2.mul(v2, v2)); }, x,
        1e-2f);
    CHECK(err < 1e-3f);
  }
  SUBCASE("non-finite f reports evaluation error") {
    Tensor big({1}, {1e30f});
    CHECK_THROWS_AS(
        grad_check(
            [](Tape& t, VarId v) { return t.sum_all(t.mul(t.mul(v, v), v)); },
            big, 1e-2f),
        std::runtime_error);
  }
}

TEST_CASE("grad_check every primitive over random inputs") {
  Rng rng(11);
  const float h = 1e-2f;
  const float tol = 1e-3f;
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 2 + int(rng.below(3));
    const int k = 2 + int(rng.below(3));
    const int n = 2 + int(rng.below(3));
    Tensor x = random_tensor({m, k}, rng, -1.0f, 1.0f);
    Tensor w_mk = random_tensor({m, k}, rng);
    Tensor w_mn = random_tensor({m, n}, rng);
    Tensor other = random_tensor({k, n}, rng);
    Tensor same = random_tensor({m, k}, rng);
    Tensor bias = random_tensor({1, k}, rng);

    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                return weigh(t, t.matmul(v, t.leaf(other)), w_mn);
              },
              x, h) < tol);
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                return weigh(t, t.add(v, t.leaf(same)), w_mk);
              },
              x, h) < tol);
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                return weigh(t, t.add_row(v, t.leaf(bias)), w_mk);
              },
              x, h) < tol);
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                return weigh(t, t.mul(v, t.leaf(same)), w_mk);
              },
              x, h) < tol);
    CHECK(grad_check(
              [&](Tape& t, VarId v) { return weigh(t, t.scale(v, -1.7f), w_mk); },
              x, h) < tol);
    CHECK(grad_check(
              [&](Tape& t, VarId v) { return weigh(t, t.sigmoid(v), w_mk); },
              x, h) < tol);
    CHECK(grad_check(
              [&](Tape& t, VarId v) { return weigh(t, t.tanh(v), w_mk); }, x,
              h) < tol);
    Tensor w_cat = random_tensor({m, 2 * k}, rng);
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                return weigh(t, t.concat_cols(v, t.leaf(same)), w_cat);
              },
              x, h) < tol);
    Tensor w_slice = random_tensor({m, k - 1}, rng);
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                return weigh(t, t.slice_cols(v, 1, k), w_slice);
              },
              x, h) < tol);
    std::vector<int> ids;
    for (int i = 0; i < 4; ++i) ids.push_back(int(rng.below(size_t(m))));
    Tensor w_rows = random_tensor({4, k}, rng);
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                return weigh(t, t.lookup_rows(v, ids), w_rows);
              },
              x, h) < tol);
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                return weigh(t, t.softmax_rows(v), w_mk);
              },
              x, h) < tol);
    CHECK(grad_check([&](Tape& t, VarId v) { return t.sum_all(v); }, x, h) <
          tol);

    // 3-d ops: stack two projections of v so gradients flow through memory
    Tensor w_q = random_tensor({m, k}, rng);
    Tensor w_bl = random_tensor({m, 2}, rng);
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                VarId mem = t.stack({v, t.mul(v, t.leaf(same))});
                return weigh(t, t.bdot(t.leaf(w_q), mem), w_bl);
              },
              x, h) < tol);
    Tensor w_bh = random_tensor({m, k}, rng);
    Tensor weights = random_tensor({m, 2}, rng, 0.0f, 1.0f);
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                VarId mem = t.stack({v, t.mul(v, t.leaf(same))});
                return weigh(t, t.weighted_sum(t.leaf(weights), mem), w_bh);
              },
              x, h) < tol);

    std::vector<int> targets;
    std::vector<float> mask;
    for (int r = 0; r < m; ++r) {
      targets.push_back(int(rng.below(size_t(k))));
      mask.push_back(r == m - 1 ? 0.0f : 1.0f);
    }
    Tensor w_b = random_tensor({m}, rng);
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                return weigh(t, t.picked_nll(v, targets, mask), w_b);
              },
              x, h) < tol);

    const uint64_t drop_seed = rng.next_u64();
    CHECK(grad_check(
              [&](Tape& t, VarId v) {
                Rng r(drop_seed);  // same mask on every evaluation
                return weigh(t, t.dropout(v, 0.3f, r), w_mk);
              },
              x, h) < tol);
  }
}

TEST_CASE("forward and backward stay finite on random chains") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    int m = 2 + int(rng.below(6));
    int k = 2 + int(rng.below(6));
    VarId a = t.leaf(random_tensor({m, k}, rng, -3.0f, 3.0f));
    VarId b = t.leaf(random_tensor({k, m}, rng, -3.0f, 3.0f));
    VarId h1 = t.tanh(t.matmul(a, b));
    VarId h2 = t.sigmoid(t.matmul(h1, t.leaf(random_tensor({m, k}, rng))));
    VarId out = t.sum_all(t.softmax_rows(h2));
    t.backward(out);
    CHECK(t.values_finite());
    CHECK(t.grad(a).all_finite());
    CHECK(t.grad(b).all_finite());
  }
}

TEST_CASE("gradients of unused nodes stay zero") {
  Tape t;
  VarId used = t.leaf(Tensor({1}, {2.0f}));
  VarId unused = t.mul(used, t.leaf(Tensor({1}, {5.0f})));
  VarId out = t.sum_all(t.mul(used, used));
  t.backward(out);
  CHECK(t.grad(unused).data[0] == 0.0f);
  CHECK(t.grad(used).data[0] == doctest::Approx(4.0f));
}

TEST_CASE("global norm clipping") {
  Tensor g1({2}, {3, 0});
  Tensor g2({2}, {0, 4});
  float norm = clip_global_norm({&g1, &g2}, 5.0f);
  CHECK(norm == doctest::Approx(5.0f));
  CHECK(g1.data[0] == doctest::Approx(3.0f));  // norm == clip, untouched

  Tensor h1({1}, {30});
  Tensor h2({1}, {40});
  norm = clip_global_norm({&h1, &h2}, 5.0f);
  CHECK(norm == doctest::Approx(50.0f));
  CHECK(h1.data[0] == doctest::Approx(3.0f));
  CHECK(h2.data[0] == doctest::Approx(4.0f));
}

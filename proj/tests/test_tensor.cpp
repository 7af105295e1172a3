// Copyright 2026 The alignlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "alignlab/rng.hpp"
#include "alignlab/tensor.hpp"
#include "test_util.hpp"

using namespace alignlab;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("matmul shapes and values") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 4});
  CHECK(c.at(0, 0) == 1);
  CHECK(c.at(1, 2) == 6);
  CHECK(c.at(0, 3) == 0);

  CHECK_THROWS_WITH_AS(matmul(a, Tensor::zeros({4, 2})),
                       doctest::Contains("[2,3]"), std::invalid_argument);
}

TEST_CASE("softmax of constant row is uniform") {
  Tensor x({3}, {0, 0, 0});
  Tensor y = softmax(x, 0);
  for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("log_softmax over a length-1 axis is zero") {
  Tensor x({1}, {2.7});
  CHECK(log_softmax(x, 0).at(0) == doctest::Approx(0.0).epsilon(1e-15));
  Tensor m({4, 1}, {1, 2, 3, 4});
  Tensor y = log_softmax(m, 1);
  for (int i = 0; i < 4; ++i) CHECK(y.at(i, 0) == 0.0);
}

TEST_CASE("softmax along an axis of a rank-3 tensor normalizes") {
  Rng rng(11);
  Tensor x = random_tensor({2, 3, 4}, rng);
  Tensor y = softmax(x, 1);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 4; ++k) {
      double s = 0.0;
      for (int j = 0; j < 3; ++j) s += y.values()[(i * 3 + j) * 4 + k];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("elementwise shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,3]"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(mul(a, b), doctest::Contains("[3,2]"), std::invalid_argument);
}

TEST_CASE("backward of sum(x*x) is 2x") {
  Tensor x({3}, {1, 2, 3});
  Tape tape;
  tape.watch(x);
  Tensor loss = sum(mul(x, x));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("backward of tanh(w.x) at w=0 equals x") {
  Tensor w = Tensor::zeros({1, 3});
  Tensor x({3, 1}, {0.3, -1.2, 2.0});
  Tape tape;
  tape.watch(w);
  Tensor loss = sum(tanh(matmul(w, x)));
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(w.grad()[i] == doctest::Approx(x.at(i, 0)).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar loss and foreign losses") {
  Tensor x({2}, {1.0, 2.0});
  Tape tape;
  tape.watch(x);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  Tape other;
  Tensor z = Tensor::scalar(1.0);
  other.watch(z);
  Tensor w = sum(mul(z, z));
  CHECK_THROWS_AS(tape.backward(w), std::invalid_argument);
}

TEST_CASE("two backward passes yield identical gradients") {
  Rng rng(3);
  Tensor a = random_tensor({4, 3}, rng);
  Tensor b = random_tensor({3, 2}, rng);
  Tape tape;
  tape.watch(a);
  tape.watch(b);
  Tensor loss = sum(tanh(matmul(a, b)));
  tape.backward(loss);
  auto ga = a.grad();
  auto gb = b.grad();
  tape.backward(loss);
  CHECK(a.grad() == ga);
  CHECK(b.grad() == gb);
}

TEST_CASE("gradient accumulates when a tensor feeds multiple consumers") {
  Tensor x({2}, {1.0, -2.0});
  Tape tape;
  tape.watch(x);
  Tensor loss = sum(add(mul(x, x), mul(x, x)));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-8.0));
}

TEST_CASE("masked reductions zero gradients at masked rows") {
  Tensor x({4}, {1, 2, 3, 4});
  Tensor mask({4}, {1, 0, 1, 0});
  Tape tape;
  tape.watch(x);
  Tensor loss = masked_mean(x, mask);
  CHECK(loss.item() == doctest::Approx(2.0));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(0.5));
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == doctest::Approx(0.5));
  CHECK(x.grad()[3] == 0.0);

  // Fully masked: zero value, untracked result.
  Tensor none = masked_mean(x, Tensor::zeros({4}));
  CHECK(none.item() == 0.0);
  CHECK(!none.tracked());
}

TEST_CASE("masked_sum over a matrix reduces rows") {
  Tensor x({3, 2}, {1, 10, 2, 20, 3, 30});
  Tensor mask({3}, {1, 0, 1});
  Tensor s = masked_sum(x, mask);
  CHECK(s.shape() == Shape{2});
  CHECK(s.at(0) == doctest::Approx(4.0));
  CHECK(s.at(1) == doctest::Approx(40.0));
}

TEST_CASE("embedding lookup gathers rows and scatters gradients") {
  Tensor table({3, 2}, {0, 1, 10, 11, 20, 21});
  Tape tape;
  tape.watch(table);
  Tensor e = embedding_lookup(table, {2, 0, 2});
  CHECK(e.shape() == Shape{3, 2});
  CHECK(e.at(0, 1) == 21);
  tape.backward(sum(e));
  CHECK(table.grad()[0] == 1.0);   // row 0 used once
  CHECK(table.grad()[2 * 2] == 2.0);  // row 2 used twice
  CHECK(table.grad()[1 * 2] == 0.0);

  CHECK_THROWS_AS(embedding_lookup(table, {3}), std::invalid_argument);
}

TEST_CASE("concat and slice round-trip along both axes") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  Tensor c0 = concat(a, b, 0);
  CHECK(c0.shape() == Shape{4, 2});
  CHECK(c0.at(2, 0) == 5);
  Tensor c1 = concat(a, b, 1);
  CHECK(c1.shape() == Shape{2, 4});
  CHECK(c1.at(0, 2) == 5);
  CHECK(c1.at(1, 3) == 8);
  Tensor back = slice(c1, 1, 2, 2);
  CHECK(back.values() == b.values());
}

TEST_CASE("tile_rows repeats and its gradient sums over rows") {
  Tensor v({3}, {1, 2, 3});
  Tape tape;
  tape.watch(v);
  Tensor t = tile_rows(v, 4);
  CHECK(t.shape() == Shape{4, 3});
  CHECK(t.at(3, 2) == 3);
  tape.backward(sum(t));
  for (int i = 0; i < 3; ++i) CHECK(v.grad()[i] == doctest::Approx(4.0));
}

TEST_CASE("operations on tensors from different live tapes are rejected") {
  Tensor a = Tensor::scalar(1.0);
  Tensor b = Tensor::scalar(2.0);
  Tape t1, t2;
  t1.watch(a);
  t2.watch(b);
  CHECK_THROWS_AS(add(a, b), std::runtime_error);
}

TEST_CASE("finite differences validate every primitive") {
  Rng rng(17);
  auto check = [&](const std::function<Tensor(const Tensor&, const Tensor&)>& f,
                   Shape sa, Shape sb) {
    Tensor a = random_tensor(sa, rng, 0.7);
    Tensor b = random_tensor(sb, rng, 0.7);
    auto eval = [&]() {
      return sum(tanh(f(a, b))).item();
    };
    Tape tape;
    tape.watch(a);
    tape.watch(b);
    Tensor loss = sum(tanh(f(a, b)));
    tape.backward(loss);
    auto rep = testutil::fd_compare(eval, {a, b}, {a.grad(), b.grad()});
    CHECK(rep.max_rel_err < 1e-5);
  };

  check([](const Tensor& a, const Tensor& b) { return matmul(a, b); }, {3, 4}, {4, 2});
  check([](const Tensor& a, const Tensor& b) { return add(a, b); }, {3, 3}, {3, 3});
  check([](const Tensor& a, const Tensor& b) { return sub(a, b); }, {3, 3}, {3, 3});
  check([](const Tensor& a, const Tensor& b) { return mul(a, b); }, {2, 5}, {2, 5});
  check([](const Tensor& a, const Tensor& b) { return mul(sigmoid(a), tanh(b)); }, {4}, {4});
  check([](const Tensor& a, const Tensor& b) { return matmul(softmax(a, 1), b); }, {2, 3}, {3, 2});
  check([](const Tensor& a, const Tensor& b) { return add(log_softmax(a, 0), log_softmax(b, 1)); },
        {4, 2}, {4, 2});
  check([](const Tensor& a, const Tensor& b) { return concat(a, b, 1); }, {2, 2}, {2, 3});
  check([](const Tensor& a, const Tensor& b) { return mul(slice(a, 0, 1, 2), slice(b, 0, 0, 2)); },
        {4, 2}, {3, 2});
  check([](const Tensor& a, const Tensor& b) { return matmul(tile_rows(a, 3), b); }, {2}, {2, 2});
  check([](const Tensor& a, const Tensor& b) { return mul(reshape(a, {6}), reshape(b, {6})); },
        {2, 3}, {3, 2});
  check([](const Tensor& a, const Tensor& b) {
    Tensor mask({3}, {1, 0, 1});
    return add(masked_sum(mul(a, a), mask), masked_mean(b, mask));
  }, {3, 2}, {3, 2});
  check([](const Tensor& a, const Tensor& b) { return mul(sum_axis(a, 0), sum_axis(b, 1)); },
        {3, 2}, {2, 3});
  check([](const Tensor& a, const Tensor& b) { return matmul(embedding_lookup(a, {1, 0, 1}), b); },
        {2, 3}, {3, 2});
  check([](const Tensor& a, const Tensor& b) { return scale(add(a, b), -2.5); }, {2, 2}, {2, 2});
}

TEST_CASE("finite differences validate random composed graphs") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed * 101);
    Tensor a = random_tensor({3, 4}, rng, 0.5);
    Tensor b = random_tensor({4, 3}, rng, 0.5);
    Tensor c = random_tensor({3, 3}, rng, 0.5);

    auto build = [&]() {
      Tensor h1 = tanh(matmul(a, b));              // [3,3]
      Tensor h2 = sigmoid(add(h1, c));             // [3,3]
      Tensor att = softmax(matmul(h2, h1), 1);     // [3,3]
      Tensor mix = mul(att, log_softmax(h2, 0));   // [3,3]
      Tensor pooled = sum_axis(concat(mix, h2, 1), 1);  // [3]
      Tensor mask({3}, {1, 1, 0});
      return masked_mean(mul(pooled, pooled), mask);
    };

    Tape tape;
    tape.watch(a);
    tape.watch(b);
    tape.watch(c);
    Tensor loss = build();
    tape.backward(loss);
    auto rep = testutil::fd_compare([&]() { return build().item(); }, {a, b, c},
                                    {a.grad(), b.grad(), c.grad()});
    CHECK(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("watched but unused leaves receive zero gradients") {
  Tensor used = Tensor::scalar(2.0);
  Tensor unused = Tensor::zeros({3});
  Tape tape;
  tape.watch(used);
  tape.watch(unused);
  tape.backward(sum(mul(used, used)));
  CHECK(unused.grad() == std::vector<double>{0, 0, 0});
}

TEST_CASE("logadd and logsumexp respect the log-zero sentinel") {
  CHECK(logadd(kLogZero, kLogZero) == kLogZero);
  CHECK(logadd(0.0, kLogZero) == 0.0);
  CHECK(logadd(std::log(0.25), std::log(0.75)) == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<double> xs{kLogZero, std::log(0.5), std::log(0.5)};
  CHECK(logsumexp(xs) == doctest::Approx(0.0).epsilon(1e-12));
}

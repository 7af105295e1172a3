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

#include "alignlab/losses.hpp"
#include "alignlab/rng.hpp"
#include "test_util.hpp"

using namespace alignlab;

namespace {

Tensor random_log_probs(int rows, int classes, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(rows) * classes);
  for (auto& x : v) x = rng.normal();
  return log_softmax(Tensor({rows, classes}, std::move(v)), 1);
}

Tensor ones(int n) { return Tensor::full({n}, 1.0); }

}  // namespace

TEST_CASE("smoothed_ce with epsilon 0 is plain cross-entropy") {
  Rng rng(5);
  Tensor lp = random_log_probs(4, 6, rng);
  std::vector<int> targets{0, 3, 5, 2};
  double loss = smoothed_ce(lp, targets, ones(4), 0.0).item();
  double expect = 0.0;
  for (int i = 0; i < 4; ++i) expect -= lp.at(i, targets[i]);
  expect /= 4.0;
  CHECK(loss == expect);  // exact, not approximate
}

TEST_CASE("smoothed_ce on a uniform prediction equals log V for any epsilon") {
  const int v = 7;
  Tensor lp = Tensor::full({3, v}, -std::log(static_cast<double>(v)));
  for (double eps : {0.0, 0.1, 0.5, 0.9}) {
    double loss = smoothed_ce(lp, {1, 2, 3}, ones(3), eps).item();
    CHECK(loss == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-13));
  }
}

TEST_CASE("smoothed_ce hand example: V=2, p=[0.8,0.2], eps=0.5") {
  Tensor lp({1, 2}, {std::log(0.8), std::log(0.2)});
  double loss = smoothed_ce(lp, {0}, ones(1), 0.5).item();
  double expect = -(0.75 * std::log(0.8) + 0.25 * std::log(0.2));
  CHECK(loss == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("smoothed_ce with uniform prediction is target-invariant") {
  const int v = 5;
  Tensor lp = Tensor::full({1, v}, -std::log(static_cast<double>(v)));
  double base = smoothed_ce(lp, {0}, ones(1), 0.5).item();
  for (int k = 1; k < v; ++k)
    CHECK(smoothed_ce(lp, {k}, ones(1), 0.5).item() == doctest::Approx(base));
}

TEST_CASE("smoothed_ce rejects bad epsilon and out-of-range targets") {
  Tensor lp = Tensor::full({2, 3}, -std::log(3.0));
  CHECK_THROWS_AS(smoothed_ce(lp, {0, 1}, ones(2), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(smoothed_ce(lp, {0, 1}, ones(2), -0.1), std::invalid_argument);
  CHECK_THROWS_AS(smoothed_ce(lp, {0, 3}, ones(2), 0.1), std::invalid_argument);
  // Out-of-range target at a masked row is ignored.
  Tensor mask({2}, {1, 0});
  CHECK_NOTHROW(smoothed_ce(lp, {0, kIgnoreLabel}, mask, 0.1));
}

TEST_CASE("smoothed_ce gradient descent converges to the smoothed target") {
  const int v = 6;
  const double eps = 0.5;
  Tensor logits = Tensor::zeros({1, v});
  for (int step = 0; step < 4000; ++step) {
    Tape tape;
    tape.watch(logits);
    Tensor loss = smoothed_ce(log_softmax(logits, 1), {2}, ones(1), eps);
    tape.backward(loss);
    for (int k = 0; k < v; ++k) logits.values()[k] -= 0.5 * logits.grad()[k];
  }
  Tensor p = softmax(logits, 1);
  const double off = eps / v;
  for (int k = 0; k < v; ++k) {
    double q = k == 2 ? 1.0 - eps + off : off;
    CHECK(p.at(0, k) == doctest::Approx(q).epsilon(1e-4));
  }
}

TEST_CASE("frame_alignment_ce masks sentinel frames and checks lengths") {
  Rng rng(9);
  Linear head(4, 3, rng);
  Tensor frames({2, 4}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6, -0.7, 0.8});

  FrameAlignment bad{{0, 1, 2}, UnitKind::kPhone};
  CHECK_THROWS_WITH_AS(frame_alignment_ce(frames, bad, head),
                       doctest::Contains("alignment length"),
                       std::invalid_argument);

  FrameAlignment all_masked{{kIgnoreLabel, kIgnoreLabel}, UnitKind::kPhone};
  Tape tape;
  tape.watch(head.weight);
  Tensor loss = frame_alignment_ce(frames, all_masked, head);
  CHECK(loss.item() == 0.0);
  CHECK(!loss.tracked());
}

TEST_CASE("frame_alignment_ce with uniform head yields log V") {
  Rng rng(9);
  Linear head(4, 5, rng);
  head.weight = Tensor::zeros({4, 5});
  head.bias = Tensor::zeros({5});
  Tensor frame({1, 4}, {1.0, 2.0, 3.0, 4.0});
  FrameAlignment align{{3}, UnitKind::kPhone};
  CHECK(frame_alignment_ce(frame, align, head).item() ==
        doctest::Approx(std::log(5.0)).epsilon(1e-13));
}

TEST_CASE("frame_alignment_ce two-frame hand computation") {
  Linear head;
  head.weight = Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0});  // identity
  head.bias = Tensor::zeros({2});
  Tensor frames({2, 2}, {2.0, 0.0, 0.0, 1.0});
  FrameAlignment align{{0, 1}, UnitKind::kPhone};
  const double eps = 0.5;
  // Per-frame smoothed CE against log-softmax of the rows themselves.
  auto row_loss = [&](double a, double b, int gold) {
    double z = std::log(std::exp(a) + std::exp(b));
    double l0 = a - z, l1 = b - z;
    double q0 = gold == 0 ? 1 - eps + eps / 2 : eps / 2;
    double q1 = 1.0 - q0;
    return -(q0 * l0 + q1 * l1);
  };
  double expect = 0.5 * (row_loss(2, 0, 0) + row_loss(0, 1, 1));
  CHECK(frame_alignment_ce(frames, align, head, eps).item() ==
        doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("ctc_loss single-frame single-label") {
  Rng rng(2);
  Tensor lp = random_log_probs(1, 3, rng);  // labels {0,1}, blank 2
  double loss = ctc_loss(lp, {1}).item();
  CHECK(loss == doctest::Approx(-lp.at(0, 1)).epsilon(1e-12));
}

TEST_CASE("ctc_loss two frames, one label: three paths") {
  Rng rng(3);
  Tensor lp = random_log_probs(2, 3, rng);
  double loss = ctc_loss(lp, {0}).item();
  double p = std::exp(lp.at(0, 0)) * std::exp(lp.at(1, 0)) +
             std::exp(lp.at(0, 0)) * std::exp(lp.at(1, 2)) +
             std::exp(lp.at(0, 2)) * std::exp(lp.at(1, 0));
  CHECK(loss == doctest::Approx(-std::log(p)).epsilon(1e-12));
}

TEST_CASE("ctc_loss matches brute-force enumeration on small instances") {
  Rng rng(11);
  for (int iter = 0; iter < 40; ++iter) {
    int t_len = rng.uniform_int(1, 6);
    int vocab = rng.uniform_int(1, 3);
    int n = rng.uniform_int(0, 3);
    std::vector<int> targets;
    for (int i = 0; i < n; ++i) targets.push_back(rng.uniform_int(0, vocab - 1));
    Tensor lp = random_log_probs(t_len, vocab + 1, rng);

    std::vector<std::vector<double>> rows(t_len);
    for (int t = 0; t < t_len; ++t)
      for (int k = 0; k <= vocab; ++k) rows[t].push_back(lp.at(t, k));
    auto oracle = testutil::ctc_brute_force(rows, targets, vocab);

    bool skipped = false;
    Tensor loss = ctc_loss(lp, targets, &skipped);
    if (!oracle.has_value()) {
      CHECK(skipped);
      CHECK(!loss.tracked());
    } else {
      REQUIRE(!skipped);
      CHECK(loss.item() == doctest::Approx(*oracle).epsilon(1e-11));
    }
  }
}

TEST_CASE("ctc_loss infeasible utterance is a zero-gradient sentinel") {
  Rng rng(4);
  Tensor lp = random_log_probs(2, 3, rng);
  Tape tape;
  tape.watch(lp);
  bool skipped = false;
  Tensor loss = ctc_loss(lp, {0, 0}, &skipped);  // needs 3 frames
  CHECK(skipped);
  CHECK(loss.item() == 0.0);
  CHECK(!loss.tracked());
  CHECK(ctc_min_frames({0, 0}) == 3);
  CHECK(ctc_min_frames({0, 1, 1}) == 4);
  CHECK(ctc_min_frames({}) == 0);
}

TEST_CASE("ctc_loss rejects labels colliding with the blank") {
  Rng rng(4);
  Tensor lp = random_log_probs(3, 3, rng);
  CHECK_THROWS_AS(ctc_loss(lp, {2}), std::invalid_argument);
  CHECK_THROWS_AS(ctc_loss(lp, {-1}), std::invalid_argument);
}

TEST_CASE("ctc_loss gradient matches finite differences") {
  Rng rng(21);
  for (int iter = 0; iter < 5; ++iter) {
    int t_len = rng.uniform_int(3, 6);
    int vocab = rng.uniform_int(2, 3);
    std::vector<int> targets;
    int n = rng.uniform_int(1, 2);
    for (int i = 0; i < n; ++i) targets.push_back(rng.uniform_int(0, vocab - 1));

    std::vector<double> raw(static_cast<std::size_t>(t_len) * (vocab + 1));
    for (auto& x : raw) x = rng.normal();
    Tensor logits({t_len, vocab + 1}, raw);

    auto build = [&]() { return ctc_loss(log_softmax(logits, 1), targets); };
    Tape tape;
    tape.watch(logits);
    Tensor loss = build();
    REQUIRE(loss.tracked());
    tape.backward(loss);
    auto rep = testutil::fd_compare([&]() { return build().item(); }, {logits},
                                    {logits.grad()});
    CHECK(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("smoothed_ce gradient matches finite differences for all epsilons") {
  Rng rng(31);
  for (double eps : {0.0, 0.1, 0.5}) {
    std::vector<double> raw(20);
    for (auto& x : raw) x = rng.normal();
    Tensor logits({4, 5}, raw);
    std::vector<int> targets{1, 4, 0, 2};
    Tensor mask({4}, {1, 1, 0, 1});
    auto build = [&]() {
      return smoothed_ce(log_softmax(logits, 1), targets, mask, eps);
    };
    Tape tape;
    tape.watch(logits);
    Tensor loss = build();
    tape.backward(loss);
    auto rep = testutil::fd_compare([&]() { return build().item(); }, {logits},
                                    {logits.grad()});
    CHECK(rep.max_rel_err < 1e-5);
    // Masked frame receives exactly zero gradient.
    for (int k = 0; k < 5; ++k) CHECK(logits.grad()[2 * 5 + k] == 0.0);
  }
}

// Copyright 2026 The HoHoNet Authors. All Rights Reserved.
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

#include <vector>

#include "hoho/tensor.hpp"
#include "test_util.hpp"

using namespace hoho;
using testutil::max_abs_diff;
using testutil::max_grad_rel_err;
using testutil::random_tensor;

TEST_CASE("elementwise basics") {
  Tensor a = Tensor::from({1, 2}, {2});
  Tensor z = Tensor::from({0, 0}, {2});
  Tensor s = add(a, z);
  CHECK(s.at(0) == doctest::Approx(1));
  CHECK(s.at(1) == doctest::Approx(2));

  Tensor r = relu(Tensor::from({-1, 0, 2}, {3}));
  CHECK(r.at(0) == 0);
  CHECK(r.at(1) == 0);
  CHECK(r.at(2) == doctest::Approx(2));

  Tensor m = mul(Tensor::from({2, 3}, {2}), Tensor::from({4, 5}, {2}));
  CHECK(m.at(0) == doctest::Approx(8));
  CHECK(m.at(1) == doctest::Approx(15));

  CHECK(scale(a, 3.0).at(1) == doctest::Approx(6));
}

TEST_CASE("shape mismatch reports both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,3]"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[4]"), std::invalid_argument);
}

TEST_CASE("precision modes cannot mix") {
  Tensor a = Tensor::zeros({2}, DType::kF32);
  Tensor b = Tensor::zeros({2}, DType::kF64);
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("mul gradient matches finite difference") {
  Tensor a = Tensor::from({3}, {1}, DType::kF64);
  Tensor b = Tensor::from({5}, {1}, DType::kF64);
  auto loss = [&]() { return reduce_sum(mul(a, b)); };
  CHECK(max_grad_rel_err(loss, {a, b}) < 1e-6);

  // Direct check of the analytic value.
  a.set_requires_grad(true);
  a.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(reduce_sum(mul(a, b)));
  }
  CHECK(a.grad().at(0) == doctest::Approx(5.0));
}

TEST_CASE("matmul identity and sum") {
  Tensor eye = Tensor::from({1, 0, 0, 1}, {2, 2});
  Tensor m = Tensor::from({1, 2, 3, 4}, {2, 2});
  Tensor out = matmul(eye, m);
  CHECK(max_abs_diff(out, m) == 0.0);

  Tensor row = Tensor::from({1, 1}, {1, 2});
  Tensor col = Tensor::from({1, 1}, {2, 1});
  CHECK(matmul(row, col).item() == doctest::Approx(2.0));
}

TEST_CASE("matmul against triple-loop oracle") {
  SplitMix64 rng(123);
  Tensor a = random_tensor({4, 3}, rng);
  Tensor b = random_tensor({3, 5}, rng);
  Tensor c = matmul(a, b);
  for (int64_t i = 0; i < 4; ++i) {
    for (int64_t j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < 3; ++k) acc += a.at(i * 3 + k) * b.at(k * 5 + j);
      const double rel = std::abs(c.at(i * 5 + j) - acc) / std::max(1.0, std::abs(acc));
      CHECK(rel < 1e-6);
    }
  }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), std::invalid_argument);
}

TEST_CASE("matmul gradients") {
  SplitMix64 rng(5);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  auto loss = [&]() { return reduce_mean(mul(matmul(a, b), matmul(a, b))); };
  CHECK(max_grad_rel_err(loss, {a, b}, 6) < 1e-4);
}

TEST_CASE("bmatmul matches per-batch matmul") {
  SplitMix64 rng(11);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({2, 4, 5}, rng);
  Tensor c = bmatmul(a, b);
  for (int64_t i = 0; i < 2; ++i) {
    Tensor ai = narrow(a, 0, i, 1);
    Tensor bi = narrow(b, 0, i, 1);
    Tensor ci = matmul(reshape(ai, {3, 4}), reshape(bi, {4, 5}));
    CHECK(max_abs_diff(reshape(narrow(c, 0, i, 1), {3, 5}), ci) < 1e-12);
  }
  auto loss = [&]() { return reduce_mean(bmatmul(a, b)); };
  CHECK(max_grad_rel_err(loss, {a, b}, 6) < 1e-4);
}

TEST_CASE("reduce sum/mean/max") {
  Tensor v = Tensor::from({1, 2, 3}, {3});
  CHECK(reduce_sum(v).item() == doctest::Approx(6));
  CHECK(reduce_mean(v).item() == doctest::Approx(2));

  Tensor m = Tensor::from({1, 2, 3, 4, 5, 6}, {2, 3});
  Tensor s0 = reduce_sum(m, 0);
  CHECK(s0.shape() == Shape{3});
  CHECK(s0.at(0) == doctest::Approx(5));
  Tensor s1 = reduce_sum(m, 1);
  CHECK(s1.shape() == Shape{2});
  CHECK(s1.at(1) == doctest::Approx(15));
  CHECK_THROWS_AS(reduce_sum(m, 2), std::invalid_argument);

  // mean backward distributes 1/n
  Tensor x = Tensor::from({4, 8}, {2}, DType::kF64);
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(reduce_mean(x));
  }
  CHECK(x.grad().at(0) == doctest::Approx(0.5));
  CHECK(x.grad().at(1) == doctest::Approx(0.5));
}

TEST_CASE("max reduction ties break to the first index") {
  Tensor x = Tensor::from({3, 7, 7}, {3}, DType::kF64);
  x.set_requires_grad(true);
  Tape tape;
  Tensor mx;
  {
    TapeScope scope(tape);
    mx = reduce_max(x);
    tape.backward(mx);
  }
  CHECK(mx.item() == doctest::Approx(7));
  CHECK(x.grad().at(0) == 0.0);
  CHECK(x.grad().at(1) == 1.0);
  CHECK(x.grad().at(2) == 0.0);
}

TEST_CASE("backward fills ones for sum loss and power rule") {
  SplitMix64 rng(3);
  Tensor x = random_tensor({2, 3}, rng);
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(reduce_sum(x));
  }
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(x.grad().at(i) == 1.0);

  Tensor y = Tensor::from({2}, {1}, DType::kF64);
  y.set_requires_grad(true);
  Tape tape2;
  {
    TapeScope scope(tape2);
    tape2.backward(reduce_sum(mul(y, y)));
  }
  CHECK(y.grad().at(0) == doctest::Approx(4.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::zeros({3}, DType::kF64);
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  Tensor y = scale(x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("gradient accumulates across fan-out") {
  Tensor x = Tensor::from({3}, {1}, DType::kF64);
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor y = add(scale(x, 2.0), scale(x, 5.0));
    tape.backward(reduce_sum(y));
  }
  CHECK(x.grad().at(0) == doctest::Approx(7.0));
}

TEST_CASE("elementwise finite-difference suite") {
  SplitMix64 rng(17);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor bias = random_tensor({4}, rng);
  Tensor s = random_tensor({1}, rng);

  auto check = [&](const std::function<Tensor()>& f, std::vector<Tensor> params) {
    CHECK(max_grad_rel_err(f, params, 4) < 1e-4);
  };
  check([&]() { return reduce_mean(mul(add(a, b), sub(a, b))); }, {a, b});
  check([&]() { return reduce_mean(relu(sub(a, 0.1))); }, {a});
  check([&]() { return reduce_mean(add(a, bias)); }, {a, bias});
  check([&]() { return reduce_mean(mul(a, s)); }, {a, s});
  check([&]() { return reduce_max(reshape(a, {12})); }, {a});
  check([&]() { return reduce_mean(softmax_lastdim(a)); }, {a});
  check([&]() { return reduce_mean(mul(softmax_lastdim(a), b)); }, {a, b});
  check([&]() { return reduce_mean(narrow(a, 1, 1, 2)); }, {a});
}

TEST_CASE("reshape and transpose round-trips are bit-exact") {
  SplitMix64 rng(29);
  Tensor a = random_tensor({2, 3, 4}, rng, DType::kF32);
  Tensor r = reshape(reshape(a, {6, 4}), {2, 3, 4});
  CHECK(max_abs_diff(a, r) == 0.0);

  Tensor t = transpose(a, {2, 0, 1});
  CHECK(t.shape() == Shape{4, 2, 3});
  Tensor back = transpose(t, {1, 2, 0});
  CHECK(max_abs_diff(a, back) == 0.0);
}

TEST_CASE("transpose gradient") {
  SplitMix64 rng(31);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor w = random_tensor({4, 3, 2}, rng);
  auto loss = [&]() { return reduce_mean(mul(transpose(a, {2, 1, 0}), w)); };
  CHECK(max_grad_rel_err(loss, {a}, 6) < 1e-4);
}

TEST_CASE("results are deterministic") {
  SplitMix64 rng(41);
  Tensor a = random_tensor({16, 16}, rng, DType::kF32);
  Tensor b = random_tensor({16, 16}, rng, DType::kF32);
  Tensor c1 = matmul(a, b);
  Tensor c2 = matmul(a, b);
  CHECK(max_abs_diff(c1, c2) == 0.0);
}

TEST_CASE("scalar broadcast and trailing bias rules only") {
  Tensor a = Tensor::zeros({2, 3});
  CHECK_NOTHROW(add(a, Tensor::zeros({1})));
  CHECK_NOTHROW(add(a, Tensor::zeros({3})));
  CHECK_THROWS_AS(add(a, Tensor::zeros({2})), std::invalid_argument);
  CHECK_THROWS_AS(add(a, Tensor::zeros({2, 1})), std::invalid_argument);
}

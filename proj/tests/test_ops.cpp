#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tscm/ctc.hpp"
#include "tscm/ops.hpp"

using namespace tscm;
using oracle::random_tensor;

namespace {

Var<double> param(Tensor<double> t) { return Var<double>::parameter(std::move(t)); }
Var<double> constant(Shape s, std::vector<double> v) { return Var<double>::constant(Tensor<double>(std::move(s), std::move(v))); }

}  // namespace

TEST_CASE("conv2d of 1x1 inputs is a scalar product") {
  auto y = ops::conv2d(constant({1, 1, 1, 1}, {2}), constant({1, 1, 1, 1}, {3}), 1, 0);
  CHECK(y.value()[0] == 6.0);
}

TEST_CASE("zero weights give zero output") {
  std::mt19937_64 rng(1);
  auto x = Var<double>::constant(random_tensor({2, 3, 5, 5}, rng));
  auto y = ops::conv2d(x, Var<double>::constant(Tensor<double>({4, 3, 3, 3})), 1, 1);
  for (double v : y.value().values()) CHECK(v == 0.0);
  ops::ConvParams pad;
  pad.pad = {1, 1, 1};
  auto z = ops::conv3d(x, Var<double>::constant(Tensor<double>({2, 3, 3, 3, 3})), pad);
  for (double v : z.value().values()) CHECK(v == 0.0);
}

TEST_CASE("conv2d output size follows floor((H+2p-k)/s)+1") {
  std::mt19937_64 rng(2);
  auto x = Var<double>::constant(random_tensor({3, 2, 7, 9}, rng));
  auto w = Var<double>::constant(random_tensor({4, 2, 3, 3}, rng));
  CHECK(ops::conv2d(x, w, 2, 1).shape() == Shape{3, 4, 4, 5});
  CHECK(ops::conv2d(x, w, 1, 0).shape() == Shape{3, 4, 5, 7});
}

TEST_CASE("conv2d matches the nested-loop reference") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = oracle::pick(rng, 1, 2), p = oracle::pick(rng, 0, 1);
    auto x = random_tensor({oracle::pick(rng, 1, 3), 2, 4 + oracle::pick(rng, 0, 2), 4}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto y = ops::conv2d(Var<double>::constant(x), Var<double>::constant(w), s, p).value();
    auto ref = oracle::conv3d(x, w.reshaped({3, 2, 1, 3, 3}), {1, long(s), long(s)}, {0, long(p), long(p)});
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("conv1d_temporal follows the three-tap formula") {
  SUBCASE("equal weights sum the window") {
    auto y = ops::conv1d_temporal(constant({3, 1, 1, 1}, {1, 2, 3}), constant({1, 1, 3}, {1, 1, 1}), 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.value()[0] == 6.0);
  }
  SUBCASE("centre tap with padding is the identity") {
    auto y = ops::conv1d_temporal(constant({4, 1, 1, 1}, {5, -1, 2, 7}), constant({1, 1, 3}, {0, 1, 0}), 1, 1);
    CHECK(y.value().storage() == std::vector<double>{5, -1, 2, 7});
  }
  SUBCASE("random cases match the nested-loop reference") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      auto x = random_tensor({oracle::pick(rng, 3, 8), 3, 2, 2}, rng);
      auto w = random_tensor({2, 3, 3}, rng);
      const long p = static_cast<long>(oracle::pick(rng, 0, 1));
      auto y = ops::conv1d_temporal(Var<double>::constant(x), Var<double>::constant(w), 1, p).value();
      auto ref = oracle::conv3d(x, w.reshaped({2, 3, 3, 1, 1}), {1, 1, 1}, {p, 0, 0});
      REQUIRE(y.shape() == ref.shape());
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-12);
    }
  }
}

TEST_CASE("conv3d matches the nested-loop reference") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor({oracle::pick(rng, 3, 5), oracle::pick(rng, 1, 3), 5, 4}, rng);
    auto w = random_tensor({2, x.dim(1), 3, 3, 2}, rng);
    ops::ConvParams p;
    p.stride = {1, oracle::pick(rng, 1, 2), 1};
    p.pad = {oracle::pick(rng, 0, 1), 1, oracle::pick(rng, 0, 1)};
    auto y = ops::conv3d(Var<double>::constant(x), Var<double>::constant(w), p).value();
    auto ref = oracle::conv3d(x, w, {long(p.stride[0]), long(p.stride[1]), long(p.stride[2])},
                              {long(p.pad[0]), long(p.pad[1]), long(p.pad[2])});
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("mismatched shapes are reported with their dimensions") {
  auto x = Var<double>::constant(Tensor<double>({2, 3, 4, 4}));
  CHECK_THROWS_AS(ops::conv2d(x, Var<double>::constant(Tensor<double>({1, 2, 3, 3})), 1, 1), ShapeError);
  CHECK_THROWS_WITH_AS(ops::conv2d(x, Var<double>::constant(Tensor<double>({1, 3, 5, 5})), 1, 0),
                       doctest::Contains("exceeds"), ShapeError);
  CHECK_THROWS_AS(ops::add(x, Var<double>::constant(Tensor<double>({2, 3, 4, 5}))), ShapeError);
  CHECK_THROWS_AS(ops::maxpool1d_temporal(x, 3, 2), ShapeError);
}

TEST_CASE("small pooling and activation examples") {
  auto t = ops::maxpool1d_temporal(constant({4, 1, 1, 1}, {1, 3, 2, 5}), 2, 2);
  CHECK(t.value().storage() == std::vector<double>{3, 5});
  auto r = ops::relu(constant({3}, {-1, 0, 2}));
  CHECK(r.value().storage() == std::vector<double>{0, 0, 2});
}

TEST_CASE("log_softmax rows exponentiate to one") {
  std::mt19937_64 rng(6);
  auto x = Var<double>::constant(random_tensor({7, 5}, rng, -30, 30));
  auto y = ops::log_softmax(x).value();
  for (std::size_t t = 0; t < 7; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < 5; ++k) s += std::exp(y[t * 5 + k]);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("backward basics") {
  SUBCASE("sum has unit gradient") {
    auto x = param(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
    backward(ops::sum(x));
    const auto grad = x.grad();
    for (double g : grad.values()) CHECK(g == 1.0);
  }
  SUBCASE("relu gradient is the step function") {
    auto x = param(Tensor<double>({2}, {-1, 2}));
    backward(ops::sum(ops::relu(x)));
    CHECK(x.grad().storage() == std::vector<double>{0, 1});
  }
  SUBCASE("non-scalar loss is rejected") {
    auto x = param(Tensor<double>({2}, {1, 2}));
    CHECK_THROWS_AS(backward(ops::relu(x)), ShapeError);
  }
  SUBCASE("detach blocks the gradient") {
    auto x = param(Tensor<double>({2}, {1, 2}));
    auto y = ops::add(ops::detach(x), x);
    backward(ops::sum(y));
    CHECK(x.grad().storage() == std::vector<double>{1, 1});
  }
}

// Each differentiable op against central differences, 64-bit, 20 seeds,
// every dimension at most 6.
TEST_CASE("finite-difference gradients of every op") {
  constexpr double kTol = 1e-4;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    const std::size_t T = oracle::pick(rng, 2, 5), C = oracle::pick(rng, 1, 3), H = oracle::pick(rng, 3, 5),
                      W = oracle::pick(rng, 3, 5);
    auto x = random_tensor({T, C, H, W}, rng);
    auto probe = random_tensor({T, C, H, W}, rng);
    // Weighted sum keeps the loss sensitive to every output element.
    auto weigh = [](const Var<double>& y, std::mt19937_64& r) {
      return ops::sum(ops::mul(y, Var<double>::constant(random_tensor(y.shape(), r))));
    };

    SUBCASE("conv2d") {
      auto w = random_tensor({2, C, 3, 3}, rng);
      const std::size_t s = oracle::pick(rng, 1, 2);
      const auto seed2 = rng();
      CHECK(oracle::gradient_error(
                [&](auto& v) {
                  std::mt19937_64 r(seed2);
                  return weigh(ops::conv2d(v[0], v[1], s, 1), r);
                },
                {x, w}) < kTol);
    }
    SUBCASE("conv1d_temporal") {
      auto w = random_tensor({2, C, 3}, rng);
      const auto seed2 = rng();
      CHECK(oracle::gradient_error(
                [&](auto& v) {
                  std::mt19937_64 r(seed2);
                  return weigh(ops::conv1d_temporal(v[0], v[1], 1, 1), r);
                },
                {x, w}) < kTol);
    }
    SUBCASE("conv3d") {
      auto w = random_tensor({2, C, 3, 3, 3}, rng);
      ops::ConvParams p;
      p.pad = {1, 1, 1};
      p.stride = {1, 2, 1};
      const auto seed2 = rng();
      CHECK(oracle::gradient_error(
                [&](auto& v) {
                  std::mt19937_64 r(seed2);
                  return weigh(ops::conv3d(v[0], v[1], p), r);
                },
                {x, w}) < kTol);
    }
    SUBCASE("channel_norm in training and eval modes") {
      auto gamma = random_tensor({C}, rng, 0.5, 1.5);
      auto beta = random_tensor({C}, rng);
      const auto seed2 = rng();
      for (bool training : {true, false}) {
        CAPTURE(training);
        ops::NormState<double> state(C);
        state.running_mean = random_tensor({C}, rng);
        state.running_var = random_tensor({C}, rng, 0.5, 2.0);
        CHECK(oracle::gradient_error(
                  [&](auto& v) {
                    std::mt19937_64 r(seed2);
                    ops::NormState<double> s = state;
                    return weigh(ops::channel_norm(v[0], v[1], v[2], s, training), r);
                  },
                  {x, gamma, beta}) < kTol);
      }
    }
    SUBCASE("relu, add, mul, scale") {
      CHECK(oracle::gradient_error(
                [&](auto& v) { return ops::sum(ops::scale(ops::mul(ops::relu(v[0]), ops::add(v[0], v[1])), 0.7)); },
                {x, probe}) < kTol);
    }
    SUBCASE("maxpool2d and maxpool1d_temporal") {
      const auto seed2 = rng();
      CHECK(oracle::gradient_error(
                [&](auto& v) {
                  std::mt19937_64 r(seed2);
                  return weigh(ops::maxpool2d(v[0], 3, 2, 1), r);
                },
                {x}) < kTol);
      CHECK(oracle::gradient_error(
                [&](auto& v) {
                  std::mt19937_64 r(seed2);
                  return weigh(ops::maxpool1d_temporal(v[0], 2, 2), r);
                },
                {x}) < kTol);
    }
    SUBCASE("global_avgpool_spatial, linear, log_softmax") {
      const std::size_t V = oracle::pick(rng, 2, 6);
      auto w = random_tensor({V, C}, rng);
      auto b = random_tensor({V}, rng);
      const auto seed2 = rng();
      CHECK(oracle::gradient_error(
                [&](auto& v) {
                  std::mt19937_64 r(seed2);
                  return weigh(ops::log_softmax(ops::linear(ops::global_avgpool_spatial(v[0]), v[1], v[2])), r);
                },
                {x, w, b}) < kTol);
    }
  }
}

TEST_CASE("composite chain down to CTC matches finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(100 + seed);
    const std::size_t T = oracle::pick(rng, 4, 6), C = 2, V = 3;
    auto x = random_tensor({T, C, 5, 5}, rng);
    auto w = random_tensor({3, C, 3, 3}, rng);
    auto gamma = random_tensor({3}, rng, 0.5, 1.5);
    auto beta = random_tensor({3}, rng);
    auto lw = random_tensor({V + 1, 3}, rng);
    auto lb = random_tensor({V + 1}, rng);
    GlossSequence label;
    for (std::size_t i = 0; i < oracle::pick(rng, 1, 2); ++i) label.tokens.push_back(int(oracle::pick(rng, 1, V)));
    auto f = [&](const std::vector<Var<double>>& v) {
      ops::NormState<double> state(3);
      auto h = ops::conv2d(v[0], v[1], 1, 1);
      h = ops::relu(ops::channel_norm(h, v[2], v[3], state, true));
      h = ops::maxpool2d(h, 3, 2, 1);
      auto logits = ops::linear(ops::global_avgpool_spatial(h), v[4], v[5]);
      return ctc::ctc_loss(ops::log_softmax(logits), label);
    };
    CHECK(oracle::gradient_error(f, {x, w, gamma, beta, lw, lb}) < 1e-4);
  }
}

TEST_CASE("forward results are deterministic") {
  std::mt19937_64 rng(8);
  auto x = Var<double>::constant(random_tensor({3, 2, 6, 6}, rng));
  auto w = Var<double>::constant(random_tensor({4, 2, 3, 3}, rng));
  CHECK(ops::conv2d(x, w, 1, 1).value() == ops::conv2d(x, w, 1, 1).value());
}

TEST_CASE("running statistics move in training and stay fixed in eval") {
  std::mt19937_64 rng(9);
  auto x = Var<double>::constant(random_tensor({2, 2, 3, 3}, rng, 2.0, 4.0));
  auto g = Var<double>::constant(Tensor<double>::filled({2}, 1.0));
  auto b = Var<double>::constant(Tensor<double>({2}));
  ops::NormState<double> state(2);
  ops::channel_norm(x, g, b, state, false);
  CHECK(state.running_mean[0] == 0.0);
  ops::channel_norm(x, g, b, state, true);
  CHECK(state.running_mean[0] > 0.2);
  CHECK(state.running_mean[0] < 0.4);
}

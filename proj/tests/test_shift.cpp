#include <doctest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "tscm/ops.hpp"
#include "tscm/shift.hpp"

using namespace tscm;
using shift::Mode;

namespace {

std::vector<int> offsets(Mode mode, int span, std::size_t channels, std::uint64_t seed = 0) {
  shift::TscmSpec spec;
  spec.mode = mode;
  spec.span = span;
  spec.seed = seed;
  return shift::build_offset_map(spec, channels).offsets;
}

}  // namespace

TEST_CASE("offset maps") {
  CHECK(offsets(Mode::crossover, 3, 6) == std::vector<int>{-1, 0, 1, -1, 0, 1});
  CHECK(offsets(Mode::identity, 3, 4) == std::vector<int>{0, 0, 0, 0});
  CHECK(offsets(Mode::crossover, 5, 7) == std::vector<int>{-2, -1, 0, 1, 2, 0, 0});
  CHECK(offsets(Mode::superposition, 3, 7) == std::vector<int>{-1, -1, 0, 0, 1, 1, 0});
  CHECK(offsets(Mode::tsm, 3, 8) == std::vector<int>{-1, 1, 0, 0, 0, 0, 0, 0});
  CHECK(offsets(Mode::tsm, 3, 16) == std::vector<int>{-1, -1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("random crossover is seeded and stays in the span") {
  auto a = offsets(Mode::random_crossover, 5, 64, 9);
  CHECK(a == offsets(Mode::random_crossover, 5, 64, 9));
  CHECK(a != offsets(Mode::random_crossover, 5, 64, 10));
  std::set<int> seen(a.begin(), a.end());
  CHECK(*seen.begin() >= -2);
  CHECK(*seen.rbegin() <= 2);
  CHECK(seen.size() == 5);
}

TEST_CASE("invalid specs are rejected") {
  CHECK_THROWS_AS(offsets(Mode::crossover, 4, 8), std::invalid_argument);
  CHECK_THROWS_AS(offsets(Mode::crossover, 1, 8), std::invalid_argument);
  CHECK_THROWS_AS(shift::parse_mode("sideways"), std::invalid_argument);
  CHECK(shift::parse_mode("random") == Mode::random_crossover);
  for (Mode m : {Mode::crossover, Mode::superposition, Mode::random_crossover, Mode::tsm, Mode::identity})
    CHECK(shift::parse_mode(shift::mode_name(m)) == m);
}

TEST_CASE("worked crossover example on three frames") {
  Tensor<double> x({3, 3, 1, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = shift::apply(x, shift::build_offset_map({}, 3));
  CHECK(y.storage() == std::vector<double>{0, 2, 6, 1, 5, 9, 4, 8, 0});
}

TEST_CASE("trivial maps") {
  std::mt19937_64 rng(1);
  auto x = oracle::random_tensor({4, 5, 2, 2}, rng);
  auto id = shift::build_offset_map({Mode::identity, 3, 0, 0.25}, 5);
  CHECK(shift::apply(x, id) == x);
  CHECK(shift::apply_backward(x, id) == x);
  Tensor<double> zeros({4, 5, 2, 2});
  auto cross = shift::build_offset_map({}, 5);
  CHECK(shift::apply(zeros, cross) == zeros);
  CHECK(shift::apply_backward(zeros, cross) == zeros);
  CHECK_THROWS_AS(shift::apply(x, shift::build_offset_map({}, 4)), ShapeError);
}

TEST_CASE("apply matches per-element indexing across modes") {
  std::mt19937_64 rng(2);
  const Mode modes[] = {Mode::crossover, Mode::superposition, Mode::random_crossover, Mode::tsm, Mode::identity};
  for (int trial = 0; trial < 200; ++trial) {
    shift::TscmSpec spec;
    spec.mode = modes[trial % 5];
    spec.span = int(2 * oracle::pick(rng, 1, 3) + 1);
    spec.seed = rng();
    const std::size_t T = oracle::pick(rng, 1, 8), C = oracle::pick(rng, 1, 16);
    auto x = oracle::random_tensor({T, C, oracle::pick(rng, 1, 4), oracle::pick(rng, 1, 4)}, rng);
    auto map = shift::build_offset_map(spec, C);
    CHECK(shift::apply(x, map) == oracle::shift(x, map));
  }
}

TEST_CASE("every output element is a same-channel input element or zero") {
  std::mt19937_64 rng(3);
  for (int span : {3, 5, 7}) {
    const std::size_t T = 7, C = 11, HW = 4;
    Tensor<double> x({T, C, 2, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = double(i + 1);
    auto map = shift::build_offset_map({Mode::random_crossover, span, rng(), 0.25}, C);
    auto y = shift::apply(x, map);
    const std::size_t half = std::size_t(span / 2);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const std::size_t t = i / (C * HW), c = (i / HW) % C;
      if (y[i] == 0.0) {
        CHECK((t < half || t + half >= T));
        continue;
      }
      const std::size_t src = std::size_t(y[i]) - 1;
      CHECK((src / HW) % C == c);
      CHECK(src % HW == i % HW);
      CHECK(long(src / (C * HW)) == long(t) + map.offsets[c]);
    }
  }
}

TEST_CASE("backward is the adjoint and matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t C = oracle::pick(rng, 1, 6);
    auto map = shift::build_offset_map({seed % 2 ? Mode::crossover : Mode::random_crossover, 3, seed, 0.25}, C);
    auto x = oracle::random_tensor({3, C, 2, 2}, rng);
    auto g = oracle::random_tensor({3, C, 2, 2}, rng);
    const double err = oracle::gradient_error(
        [&](auto& v) { return ops::sum(ops::mul(shift::temporal_shift(v[0], map), Var<double>::constant(g))); }, {x});
    CHECK(err < 1e-6);
    // <apply(x), g> == <x, apply_backward(g)>
    auto ax = shift::apply(x, map);
    auto bg = shift::apply_backward(g, map);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      lhs += ax[i] * g[i];
      rhs += x[i] * bg[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("stacked-channel form of a kernel-3 convolution") {
  SUBCASE("unit weights on 1,2,3") {
    auto [a, b] = shift::stacked_equivalence_reference(Tensor<double>({3, 1}, {1, 2, 3}), Tensor<double>({1, 1, 3}, {1, 1, 1}));
    CHECK(a.storage() == std::vector<double>{6});
    CHECK(b.storage() == std::vector<double>{6});
  }
  SUBCASE("zero weights") {
    std::mt19937_64 rng(4);
    auto [a, b] = shift::stacked_equivalence_reference(oracle::random_tensor({6, 3}, rng), Tensor<double>({2, 3, 3}));
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == 0.0);
      CHECK(b[i] == 0.0);
    }
  }
  SUBCASE("random pairs, and the reversed arrangement breaks it") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      auto x = oracle::random_tensor({oracle::pick(rng, 3, 10), oracle::pick(rng, 1, 5)}, rng);
      auto w = oracle::random_tensor({oracle::pick(rng, 1, 4), x.dim(1), 3}, rng);
      auto [a, b] = shift::stacked_equivalence_reference(x, w);
      REQUIRE(a.shape() == b.shape());
      double worst = 0, corrupt = 0;
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
      auto [c, d] = shift::stacked_equivalence_reference(x, w, true);
      for (std::size_t i = 0; i < c.size(); ++i) corrupt = std::max(corrupt, std::abs(c[i] - d[i]));
      CHECK(worst < 1e-10);
      CHECK(corrupt > 1e-6);
    }
  }
}

#include <doctest.h>

#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "tscm/costmodel.hpp"
#include "tscm/network.hpp"
#include "tscm/snapshot.hpp"

using namespace tscm;
using net::NetworkSpec;
using net::TemporalVariant;

namespace {

// One stage of basic blocks, all replaced, no temporal pools, one head.
NetworkSpec tiny_spec(shift::Mode mode, int blocks = 2) {
  NetworkSpec s;
  s.name = "tiny";
  s.in_channels = 2;
  s.stem_width = 4;
  s.stem_kernel = 3;
  s.stem_stride = 1;
  s.stem_pool = false;
  s.stages = {{"res2", blocks, 6, net::BlockKind::basic, 1}};
  s.replaced_tail_blocks = blocks;
  s.tscm.mode = mode;
  s.heads = {{blocks, net::TapPoint::post_pool, 4}};
  s.input_h = 5;
  s.input_w = 5;
  return s;
}

template <class S>
Tensor<S> frame(const Tensor<S>& x, std::size_t t) {
  const std::size_t n = x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = 1;
  return Tensor<S>(shape, std::vector<S>(x.storage().begin() + long(t * n), x.storage().begin() + long((t + 1) * n)));
}

Tensor<double> permute_frames(const Tensor<double>& x, const std::vector<std::size_t>& perm) {
  Tensor<double> y(x.shape());
  const std::size_t n = x.size() / x.dim(0);
  for (std::size_t t = 0; t < perm.size(); ++t)
    std::copy_n(x.storage().begin() + long(perm[t] * n), n, y.storage().begin() + long(t * n));
  return y;
}

}  // namespace

TEST_CASE("presets") {
  auto s = net::preset("resnett34");
  CHECK(s.replaced_tail_blocks == 7);
  CHECK(s.total_blocks() == 16);
  CHECK(s.part1_blocks() == 9);
  CHECK(s.temporal_pools == std::vector<int>{13, 16});
  REQUIRE(s.heads.size() == 3);
  CHECK(s.heads[0].block == 13);
  CHECK(s.heads[0].tap == net::TapPoint::post_pool);
  CHECK(s.heads[1].tap == net::TapPoint::pre_pool);
  CHECK(s.heads[2].block == 16);
  CHECK(net::preset("resnett101").total_blocks() == 33);
  CHECK(net::preset("resnett50").stages[0].kind == net::BlockKind::bottleneck);
  CHECK_THROWS_AS(net::preset("resnet9"), ConfigError);
  for (const auto& name : net::preset_names()) CHECK_NOTHROW(net::preset(name).validate());
}

TEST_CASE("unsatisfiable specs") {
  auto s = net::preset("resnett34");
  s.replaced_tail_blocks = 17;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = net::preset("resnett34");
  s.tscm.span = 4;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = net::preset("resnett34");
  s.heads.clear();
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(net::parse_variant("4d"), std::invalid_argument);
}

TEST_CASE("desk preset shapes") {
  net::Model<float> model(net::preset("resnett34-desk"), 1);
  std::mt19937_64 rng(1);
  auto video = oracle::random_tensor({16, 3, 32, 32}, rng, 0, 1).cast<float>();
  auto heads = model.infer(video);
  REQUIRE(heads.size() == 3);
  CHECK(heads[0].shape() == Shape{8, 9});
  CHECK(heads[1].shape() == Shape{8, 9});
  CHECK(heads[2].shape() == Shape{4, 9});
  CHECK(model.output_frames(16) == 4);
  CHECK(model.output_frames(32) == 8);
  for (const auto& h : heads) {
    for (std::size_t t = 0; t < h.dim(0); ++t) {
      double s = 0;
      for (std::size_t k = 0; k < 9; ++k) s += std::exp(double(h[t * 9 + k]));
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  auto doubled = model.infer(oracle::random_tensor({32, 3, 32, 32}, rng, 0, 1).cast<float>());
  CHECK(doubled[2].dim(0) == 8);
  CHECK_THROWS_AS(model.infer(Tensor<float>({3, 3, 32, 32})), ShapeError);
  CHECK_THROWS_AS(model.infer(Tensor<float>({16, 3, 28, 32})), ShapeError);
}

TEST_CASE("no replaced blocks and one head gives a per-frame classifier") {
  auto s = net::preset("resnett34-desk");
  s.replaced_tail_blocks = 0;
  s.temporal_pools.clear();
  s.heads = {{16, net::TapPoint::post_pool, 9}};
  net::Model<double> model(s, 2);
  std::mt19937_64 rng(2);
  auto video = oracle::random_tensor({5, 3, 32, 32}, rng, 0, 1);
  auto all = model.infer(video)[0];
  for (std::size_t t = 0; t < 5; ++t) {
    auto one = model.infer(frame(video, t))[0];
    for (std::size_t k = 0; k < 9; ++k) CHECK(one[k] == doctest::Approx(all[t * 9 + k]).epsilon(1e-10));
  }
}

TEST_CASE("identity shift reduces a temporal block to a per-frame residual block") {
  net::Model<double> model(tiny_spec(shift::Mode::identity), 3);
  std::mt19937_64 rng(3);
  auto x = Var<double>::constant(oracle::random_tensor({4, 4, 5, 5}, rng));
  const auto& block = model.blocks()[0];
  auto y = model.block_forward(block, x, false, false).value();
  for (std::size_t t = 0; t < 4; ++t) {
    auto yt = model.block_forward(block, Var<double>::constant(frame(x.value(), t)), false, false).value();
    auto ref = frame(y, t);
    for (std::size_t i = 0; i < yt.size(); ++i) CHECK(std::abs(yt[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("frame permutation commutes with identity mode only") {
  std::mt19937_64 rng(4);
  auto video = oracle::random_tensor({6, 2, 5, 5}, rng);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  auto max_diff = [&](shift::Mode mode) {
    net::Model<double> model(tiny_spec(mode), 5);
    auto a = model.infer(permute_frames(video, perm))[0];
    auto b = permute_frames(model.infer(video)[0].reshaped({6, 4, 1, 1}), perm);
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
  };
  CHECK(max_diff(shift::Mode::identity) < 1e-12);
  CHECK(max_diff(shift::Mode::crossover) > 1e-6);
}

TEST_CASE("identical frames with identity shift give identical logits over time") {
  net::Model<double> model(tiny_spec(shift::Mode::identity), 6);
  std::mt19937_64 rng(6);
  auto one = oracle::random_tensor({1, 2, 5, 5}, rng);
  Tensor<double> video({4, 2, 5, 5});
  for (std::size_t t = 0; t < 4; ++t) std::copy(one.storage().begin(), one.storage().end(), video.storage().begin() + long(t * one.size()));
  auto y = model.infer(video)[0];
  for (std::size_t t = 1; t < 4; ++t)
    for (std::size_t k = 0; k < 4; ++k) CHECK(y[t * 4 + k] == y[k]);
}

TEST_CASE("zero branch weights leave the shortcut") {
  net::Model<double> model(tiny_spec(shift::Mode::crossover), 7);
  const auto& block = model.blocks()[1];
  for (const auto& step : block.steps)
    for (auto conv : step.convs) conv.weight.mutable_value().fill(0.0);
  std::mt19937_64 rng(7);
  auto x = oracle::random_tensor({3, 6, 5, 5}, rng, 0.0, 1.0);
  auto y = model.block_forward(block, Var<double>::constant(x), false, false).value();
  CHECK(y == x);
}

TEST_CASE("bottleneck branch widths") {
  NetworkSpec s = tiny_spec(shift::Mode::crossover, 1);
  s.stages[0].kind = net::BlockKind::bottleneck;
  s.stages[0].width = 8;
  s.stem_width = 8;
  net::Model<double> model(s, 8);
  const auto& steps = model.blocks()[0].steps;
  REQUIRE(steps.size() == 3);
  CHECK(steps[0].convs[0].weight.shape()[0] == 2);
  CHECK(steps[1].convs[0].weight.shape()[0] == 2);
  CHECK(steps[2].convs[0].weight.shape()[0] == 8);
  for (const auto& st : steps) CHECK_FALSE(st.shift_map.offsets.empty());
  CHECK_FALSE(model.blocks()[0].has_projection);
}

TEST_CASE("temporal variants") {
  auto base = net::preset("resnett34");
  auto layer_params = [](const cost::CostReport& r, const std::string& name) -> std::uint64_t {
    for (const auto& l : r.layers)
      if (l.name == name) return l.params;
    FAIL("no layer " << name);
    return 0;
  };
  auto report = [&](TemporalVariant v) {
    auto s = base;
    s.temporal = v;
    return cost::analyze(s, 224, 224, 200);
  };
  auto plain = report(TemporalVariant::plain2d), tscm = report(TemporalVariant::tscm);
  auto three = report(TemporalVariant::conv3d), two = report(TemporalVariant::conv2plus1d);
  CHECK(plain.params == tscm.params);
  CHECK(plain.macs == tscm.macs);
  CHECK(layer_params(three, "res4.3.conv1") == 3 * layer_params(plain, "res4.3.conv1"));
  CHECK(layer_params(plain, "res4.3.conv1") == 256u * 256 * 9);
  CHECK(layer_params(two, "res4.3.conv1.temporal") == 256u * 256 * 3);
  CHECK(plain.params < two.params);
  CHECK(two.params < three.params);

  net::Model<float> m2(net::preset("resnett34-desk"), 1);
  auto ps = net::preset("resnett34-desk");
  ps.temporal = TemporalVariant::plain2d;
  net::Model<float> m1(ps, 1);
  auto p1 = m1.parameters(), p2 = m2.parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].name == p2[i].name);
    CHECK(p1[i].var.shape() == p2[i].var.shape());
  }
}

TEST_CASE("materialised weights equal the cost model count") {
  for (const std::string name : {"resnett34-desk", "resnett50-desk", "resnett101-desk"}) {
    for (auto v : {TemporalVariant::tscm, TemporalVariant::plain2d, TemporalVariant::conv2plus1d, TemporalVariant::conv3d}) {
      CAPTURE(name);
      CAPTURE(net::variant_name(v));
      auto s = net::preset(name);
      s.temporal = v;
      net::Model<float> model(s, 0);
      CHECK(model.parameter_count() == cost::analyze(s, 32, 32, 16).params);
    }
  }
}

TEST_CASE("part flags follow the replaced tail") {
  net::Model<float> model(net::preset("resnett34-desk"), 0);
  for (const auto& p : model.parameters()) {
    const bool tail = p.name.rfind("res4.2", 0) == 0 || p.name.rfind("res4.3", 0) == 0 || p.name.rfind("res4.4", 0) == 0 ||
                      p.name.rfind("res4.5", 0) == 0 || p.name.rfind("res5", 0) == 0 || p.name.rfind("head", 0) == 0;
    CAPTURE(p.name);
    CHECK(p.part2 == tail);
  }
}

TEST_CASE("spec text and checkpoints round trip") {
  for (const auto& name : net::preset_names()) {
    auto s = net::preset(name);
    s.temporal = TemporalVariant::conv2plus1d;
    s.tscm.mode = shift::Mode::tsm;
    CHECK(net::to_text(net::parse_spec(net::to_text(s))) == net::to_text(s));
  }
  CHECK_THROWS_AS(net::parse_spec("[network]\ninput = 32\n"), ConfigError);

  net::Model<float> model(net::preset("resnett34-desk"), 9);
  std::mt19937_64 rng(9);
  auto video = oracle::random_tensor({8, 3, 32, 32}, rng, 0, 1).cast<float>();
  model.forward(Var<float>::constant(video), {true, false, true});   // move running stats
  const auto dir = std::filesystem::temp_directory_path() / "tscm_ckpt_test";
  std::filesystem::remove_all(dir);
  net::save_checkpoint(dir, model);
  auto loaded = net::load_checkpoint(dir);
  CHECK(net::to_text(loaded.spec()) == net::to_text(model.spec()));
  auto a = model.infer(video), b = loaded.infer(video);
  for (std::size_t h = 0; h < a.size(); ++h) CHECK(a[h] == b[h]);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(net::load_checkpoint(dir), SnapshotError);
}

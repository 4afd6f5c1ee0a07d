#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "tscm/costmodel.hpp"

using namespace tscm;
using net::TemporalVariant;

namespace {

struct Count {
  std::uint64_t params = 0, macs = 0;
};

// Hand count for the 224x224 basic-block layout: stages 3/4/6/3, the last
// seven blocks temporal, time halved after blocks 13 and 16, heads of 1233
// classes after block 13 (post-pool) and block 16 (pre- and post-pool).
Count hand_count(TemporalVariant v, std::uint64_t T) {
  Count c;
  auto conv = [&](std::uint64_t ci, std::uint64_t co, std::uint64_t k, std::uint64_t hw, std::uint64_t t) {
    c.params += ci * co * k;
    c.macs += ci * co * k * hw * hw * t;
  };
  auto norm = [&](std::uint64_t ch) { c.params += 2 * ch; };
  conv(3, 64, 49, 112, T);
  norm(64);
  const int blocks[] = {3, 4, 6, 3};
  const std::uint64_t widths[] = {64, 128, 256, 512}, sizes[] = {56, 28, 14, 7};
  std::uint64_t cin = 64, t = T;
  int index = 0;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < blocks[s]; ++b) {
      ++index;
      const bool tail = index > 9;
      const std::uint64_t w = widths[s], hw = sizes[s];
      for (std::uint64_t ci : {cin, w}) {
        if (tail && v == TemporalVariant::conv3d) {
          conv(ci, w, 27, hw, t);
        } else if (tail && v == TemporalVariant::conv2plus1d) {
          conv(ci, w, 9, hw, t);
          conv(w, w, 3, hw, t);
        } else {
          conv(ci, w, 9, hw, t);
        }
        norm(w);
      }
      if (cin != w) {
        conv(cin, w, 1, hw, t);
        norm(w);
      }
      cin = w;
      if (index == 13) {
        t /= 2;
        c.params += 256 * 1233 + 1233;
        c.macs += 256 * 1233 * t;
      }
      if (index == 16) {
        c.params += 2 * (512 * 1233 + 1233);
        c.macs += 512 * 1233 * t + 512 * 1233 * (t / 2);
      }
    }
  }
  return c;
}

cost::CostReport analyze(TemporalVariant v, std::size_t T = 200) {
  auto s = net::preset("resnett34");
  s.temporal = v;
  return cost::analyze(s, 224, 224, T);
}

}  // namespace

TEST_CASE("full-scale totals equal the hand count") {
  for (auto v : {TemporalVariant::tscm, TemporalVariant::plain2d, TemporalVariant::conv2plus1d, TemporalVariant::conv3d}) {
    CAPTURE(net::variant_name(v));
    const auto r = analyze(v);
    const auto h = hand_count(v, 200);
    CHECK(r.params == h.params);
    CHECK(r.macs == h.macs);
    CHECK(r.memory_mib() == doctest::Approx(double(h.params) * 4 / 1048576.0));
  }
}

TEST_CASE("reference parameter, memory and compute figures") {
  struct Row {
    TemporalVariant v;
    double params_m, mib, gflops;
  };
  for (auto row : {Row{TemporalVariant::plain2d, 22.0, 83.9, 671.1}, Row{TemporalVariant::tscm, 22.0, 83.9, 671.1},
                   Row{TemporalVariant::conv2plus1d, 28.3, 108.0, 756.3},
                   Row{TemporalVariant::conv3d, 57.4, 219.0, 1170.0}}) {
    CAPTURE(net::variant_name(row.v));
    const auto r = analyze(row.v);
    CHECK(std::abs(double(r.params) / 1e6 / row.params_m - 1) < 0.05);
    CHECK(std::abs(r.memory_mib() / row.mib - 1) < 0.05);
    CHECK(std::abs(r.gflops() / row.gflops - 1) < 0.08);
  }
}

TEST_CASE("shift layers cost nothing") {
  const auto r = analyze(TemporalVariant::tscm);
  int shifts = 0;
  for (const auto& l : r.layers) {
    if (l.kind != net::LayerKind::shift) continue;
    ++shifts;
    CHECK(l.params == 0);
    CHECK(l.macs == 0);
  }
  CHECK(shifts == 14);
}

TEST_CASE("frame validation") {
  auto s = net::preset("resnett34");
  CHECK_THROWS_AS(cost::analyze(s, 224, 224, 0), ConfigError);
  CHECK_THROWS_AS(cost::analyze(s, 224, 224, 3), ConfigError);
  CHECK_NOTHROW(cost::analyze(s, 224, 224, 4));
  CHECK(cost::analyze(s, 224, 224, 400).macs > analyze(TemporalVariant::tscm).macs);
}

TEST_CASE("compare table") {
  CHECK(cost::compare({}, 224, 224, 200).empty());
  std::vector<net::NetworkSpec> specs;
  for (auto v : {TemporalVariant::plain2d, TemporalVariant::tscm, TemporalVariant::conv2plus1d, TemporalVariant::conv3d}) {
    specs.push_back(net::preset("resnett34"));
    specs.back().temporal = v;
  }
  auto rows = cost::compare(specs, 224, 224, 200);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].params == rows[1].params);
  CHECK(rows[1].params < rows[2].params);
  CHECK(rows[2].params < rows[3].params);
  std::ostringstream csv;
  cost::write_compare_csv(csv, rows);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "network,variant,params,params_m,memory_mib,macs,gflops");
  int n = 0;
  while (std::getline(lines, line)) ++n;
  CHECK(n == 4);
}

TEST_CASE("json and layer csv") {
  const auto r = analyze(TemporalVariant::conv3d);
  std::ostringstream js;
  cost::write_json(js, r);
  auto j = nlohmann::json::parse(js.str());
  CHECK(j["params"].get<std::uint64_t>() == r.params);
  CHECK(j["macs"].get<std::uint64_t>() == r.macs);
  CHECK(j["layers"].size() == r.layers.size());
  std::ostringstream csv;
  cost::write_layers_csv(csv, r);
  CHECK(csv.str().rfind("name,kind,cin,cout,kt,kh,kw,h_out,w_out,frames,params,macs\n", 0) == 0);
}

TEST_CASE("bench") {
  net::Model<float> model(net::preset("resnett34-desk"), 0);
  auto one = cost::bench_inference(model, 8, 1);
  REQUIRE(one.samples_ms.size() == 1);
  CHECK(one.median_ms == one.samples_ms[0]);
  auto three = cost::bench_inference(model, 8, 3);
  CHECK(three.samples_ms.size() == 3);
  CHECK(three.median_ms > 0);
  CHECK_THROWS(cost::bench_inference(model, 2, 1));
  CHECK_THROWS(cost::bench_inference(model, 8, 0));
}

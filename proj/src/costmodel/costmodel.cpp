#include "tscm/costmodel.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace tscm::cost {

std::string_view layer_kind_name(net::LayerKind kind) {
  switch (kind) {
    case net::LayerKind::conv: return "conv";
    case net::LayerKind::norm: return "norm";
    case net::LayerKind::linear: return "linear";
    case net::LayerKind::shift: return "tscm";
    case net::LayerKind::spatial_pool: return "maxpool2d";
    case net::LayerKind::temporal_pool: return "maxpool1d";
    case net::LayerKind::avgpool: return "avgpool";
  }
  return "unknown";
}

CostReport analyze(const net::NetworkSpec& spec, int input_h, int input_w, std::size_t frames) {
  if (frames == 0) throw ConfigError("frames must be >= 1");
  net::NetworkSpec sized = spec;
  sized.input_h = input_h;
  sized.input_w = input_w;
  sized.validate();
  if ((frames >> sized.temporal_pools.size()) == 0) {
    throw ConfigError(std::to_string(frames) + " frames cannot pass " + std::to_string(sized.temporal_pools.size()) +
                      " temporal pools");
  }

  CostReport report;
  report.network = sized.name;
  report.temporal = std::string(net::variant_name(sized.temporal));
  report.input_h = input_h;
  report.input_w = input_w;
  report.frames = frames;
  for (const auto& d : net::describe(sized)) {
    LayerCost c;
    c.name = d.name;
    c.kind = d.kind;
    c.cin = d.cin;
    c.cout = d.cout;
    c.kernel = d.kernel;
    c.h_out = d.h_out;
    c.w_out = d.w_out;
    c.frames = frames >> d.pools_before;
    c.part2 = d.part2;
    const auto cin = static_cast<std::uint64_t>(d.cin), cout = static_cast<std::uint64_t>(d.cout);
    switch (d.kind) {
      case net::LayerKind::conv: {
        const std::uint64_t volume = static_cast<std::uint64_t>(d.kernel[0]) * d.kernel[1] * d.kernel[2];
        c.params = cout * cin * volume;
        c.macs = c.params * static_cast<std::uint64_t>(d.h_out) * static_cast<std::uint64_t>(d.w_out) * c.frames;
        break;
      }
      case net::LayerKind::norm:
        c.params = 2 * cout;
        break;
      case net::LayerKind::linear:
        c.params = cin * cout + cout;
        c.macs = cin * cout * c.frames;
        break;
      default:
        break;
    }
    report.params += c.params;
    report.macs += c.macs;
    report.layers.push_back(std::move(c));
  }
  return report;
}

void write_json(std::ostream& out, const CostReport& report) {
  nlohmann::json j;
  j["network"] = report.network;
  j["temporal"] = report.temporal;
  j["input"] = {report.input_h, report.input_w};
  j["frames"] = report.frames;
  j["params"] = report.params;
  j["params_m"] = static_cast<double>(report.params) / 1e6;
  j["memory_mib"] = report.memory_mib();
  j["macs"] = report.macs;
  j["gflops"] = report.gflops();
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : report.layers) {
    layers.push_back({{"name", l.name},
                      {"kind", layer_kind_name(l.kind)},
                      {"cin", l.cin},
                      {"cout", l.cout},
                      {"kernel", l.kernel},
                      {"out", {l.h_out, l.w_out}},
                      {"frames", l.frames},
                      {"params", l.params},
                      {"macs", l.macs},
                      {"part2", l.part2}});
  }
  out << j.dump(2) << '\n';
}

void write_layers_csv(std::ostream& out, const CostReport& report) {
  out << "name,kind,cin,cout,kt,kh,kw,h_out,w_out,frames,params,macs\n";
  for (const auto& l : report.layers) {
    out << l.name << ',' << layer_kind_name(l.kind) << ',' << l.cin << ',' << l.cout << ',' << l.kernel[0] << ','
        << l.kernel[1] << ',' << l.kernel[2] << ',' << l.h_out << ',' << l.w_out << ',' << l.frames << ',' << l.params
        << ',' << l.macs << '\n';
  }
  out << "TOTAL,,,,,,,,," << report.frames << ',' << report.params << ',' << report.macs << '\n';
}

std::vector<CostReport> compare(const std::vector<net::NetworkSpec>& specs, int input_h, int input_w,
                                std::size_t frames) {
  std::vector<CostReport> reports;
  for (const auto& s : specs) reports.push_back(analyze(s, input_h, input_w, frames));
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].temporal != net::TemporalVariant::tscm) continue;
    for (std::size_t j = 0; j < specs.size(); ++j) {
      if (specs[j].temporal != net::TemporalVariant::plain2d || specs[j].name != specs[i].name) continue;
      if (reports[i].params != reports[j].params || reports[i].macs != reports[j].macs) {
        throw std::logic_error("tscm and plain2d costs differ for " + specs[i].name);
      }
    }
  }
  return reports;
}

void write_compare_csv(std::ostream& out, const std::vector<CostReport>& reports) {
  out << "network,variant,params,params_m,memory_mib,macs,gflops\n";
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%.3f,%.2f,%llu,%.2f", static_cast<double>(r.params) / 1e6, r.memory_mib(),
                  static_cast<unsigned long long>(r.macs), r.gflops());
    out << r.network << ',' << r.temporal << ',' << r.params << ',' << buf << '\n';
  }
}

BenchResult bench_inference(const net::Model<float>& model, std::size_t frames, int repeats, std::uint64_t seed) {
  if (repeats < 1) throw std::invalid_argument("bench repeats must be >= 1");
  const auto& spec = model.spec();
  Tensor<float> video(Shape{frames, static_cast<std::size_t>(spec.in_channels), static_cast<std::size_t>(spec.input_h),
                            static_cast<std::size_t>(spec.input_w)});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (auto& v : video.values()) v = u(rng);

  BenchResult res;
  for (int i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    auto out = model.infer(video);
    const auto stop = std::chrono::steady_clock::now();
    res.samples_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  std::vector<double> sorted = res.samples_ms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  res.median_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  res.mean_ms = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  return res;
}

}  // namespace tscm::cost

#pragma once

// Symbolic cost walk over a NetworkSpec: parameters, parameter memory and
// multiply-accumulates, with no weights allocated. One MAC counts as one
// Flop; only convolutions and linear heads contribute MACs.

#include <iosfwd>
#include <string>
#include <vector>

#include "tscm/network.hpp"

namespace tscm::cost {

struct LayerCost {
  std::string name;
  net::LayerKind kind = net::LayerKind::conv;
  int cin = 0;
  int cout = 0;
  std::array<int, 3> kernel{1, 1, 1};
  int h_out = 0;
  int w_out = 0;
  std::size_t frames = 0;   // time length seen by the layer
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  bool part2 = false;
};

struct CostReport {
  std::string network;
  std::string temporal;
  int input_h = 0;
  int input_w = 0;
  std::size_t frames = 0;
  std::vector<LayerCost> layers;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;

  double memory_mib() const { return static_cast<double>(params) * 4.0 / (1024.0 * 1024.0); }
  double gflops() const { return static_cast<double>(macs) / 1e9; }
};

std::string_view layer_kind_name(net::LayerKind kind);

/// Throws ConfigError when the spec is invalid or frames cannot pass the
/// temporal pools.
CostReport analyze(const net::NetworkSpec& spec, int input_h, int input_w, std::size_t frames);

void write_json(std::ostream& out, const CostReport& report);
void write_layers_csv(std::ostream& out, const CostReport& report);

/// One report per spec, in order. Throws std::logic_error if a plain2d and a
/// tscm report of otherwise identical networks differ in params or MACs.
std::vector<CostReport> compare(const std::vector<net::NetworkSpec>& specs, int input_h, int input_w,
                                std::size_t frames);
/// "variant,params_m,memory_mib,gflops" rows.
void write_compare_csv(std::ostream& out, const std::vector<CostReport>& reports);

struct BenchResult {
  std::vector<double> samples_ms;
  double median_ms = 0.0;
  double mean_ms = 0.0;
};

/// Wall-clock eval forwards on a fixed pseudo-random input of the given
/// frame count at the model's input resolution.
BenchResult bench_inference(const net::Model<float>& model, std::size_t frames, int repeats = 20,
                            std::uint64_t seed = 0);

}  // namespace tscm::cost

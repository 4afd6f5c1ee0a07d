#pragma once

// Tensor snapshot file: little-endian
//   u32 rank
//   u32 dims[rank]
//   f32 values[product(dims)]
// Used for dataset videos and checkpoint weights.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "tscm/tensor.hpp"

namespace tscm {

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_snapshot(std::ostream& out, const Tensor<float>& t);
Tensor<float> read_snapshot(std::istream& in);

void save_snapshot(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_snapshot(const std::filesystem::path& path);

}  // namespace tscm

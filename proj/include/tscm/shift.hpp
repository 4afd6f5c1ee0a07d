#pragma once

// Temporal superimposed crossover: a zero-parameter remap in which channel c
// of output frame t is read from input frame t + o(c). Offsets come from a
// comb pattern across channels (crossover), contiguous channel blocks
// (superposition), a seeded random draw, the TSM split, or all zero.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tscm/autodiff.hpp"

namespace tscm::shift {

enum class Mode { crossover, superposition, random_crossover, tsm, identity };

std::string_view mode_name(Mode mode);
/// Accepts the canonical names plus "random" for random_crossover.
Mode parse_mode(std::string_view name);

struct TscmSpec {
  Mode mode = Mode::crossover;
  int span = 3;                 // adjacent frames mixed; odd, >= 3
  std::uint64_t seed = 0;       // random_crossover only
  double tsm_fraction = 0.25;   // tsm only: total fraction of shifted channels

  void validate() const;
  friend bool operator==(const TscmSpec&, const TscmSpec&) = default;
};

/// Per-channel temporal offset, each within [-(span-1)/2, (span-1)/2].
struct ChannelOffsetMap {
  std::vector<int> offsets;

  std::size_t channels() const noexcept { return offsets.size(); }
  bool is_identity() const noexcept;
  friend bool operator==(const ChannelOffsetMap&, const ChannelOffsetMap&) = default;
};

ChannelOffsetMap build_offset_map(const TscmSpec& spec, std::size_t channels);

/// out[t][c] = x[t + o(c)][c] when that frame exists, else 0.
template <class S>
Tensor<S> apply(const Tensor<S>& x, const ChannelOffsetMap& map);

/// Adjoint of apply: scatters grad_out back to the frames it was read from.
template <class S>
Tensor<S> apply_backward(const Tensor<S>& grad_out, const ChannelOffsetMap& map);

/// Differentiable form used inside ResBlockT.
template <class S>
Var<S> temporal_shift(const Var<S>& x, const ChannelOffsetMap& map);

/// Both sides of the stacked-channel identity for a kernel-3 temporal
/// convolution. x is [T,C], w is [Co,C,3]. The first series is the ordinary
/// valid convolution; the second concatenates frames (i-1, i, i+1) into 3C
/// channels and applies a pointwise product with W' = [w1 | w2 | w3].
/// Both are [T-2, Co]. With corrupt_arrangement the W' blocks are placed in
/// reverse order, which must break the identity for asymmetric kernels.
template <class S>
std::pair<Tensor<S>, Tensor<S>> stacked_equivalence_reference(const Tensor<S>& x, const Tensor<S>& w,
                                                               bool corrupt_arrangement = false);

}  // namespace tscm::shift

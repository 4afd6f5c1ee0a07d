#pragma once

#include <string>
#include <vector>

namespace tscm {

/// Id 0 is the CTC blank; real glosses use 1..V.
inline constexpr int kBlank = 0;

/// An ordered label of gloss ids, none of which is the blank.
struct GlossSequence {
  std::vector<int> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }

  /// Blank-interleaved form of length 2L+1: blank, l1, blank, l2, ..., blank.
  std::vector<int> extended() const {
    std::vector<int> out(2 * tokens.size() + 1, kBlank);
    for (std::size_t i = 0; i < tokens.size(); ++i) out[2 * i + 1] = tokens[i];
    return out;
  }

  friend bool operator==(const GlossSequence&, const GlossSequence&) = default;
  friend auto operator<=>(const GlossSequence&, const GlossSequence&) = default;
};

}  // namespace tscm

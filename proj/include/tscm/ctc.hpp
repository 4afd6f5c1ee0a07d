#pragma once

#include <vector>

#include "tscm/autodiff.hpp"
#include "tscm/gloss.hpp"

namespace tscm::ctc {

template <class S>
struct CtcResult {
  double loss = 0.0;        // -log p(label | x), +inf when no alignment exists
  bool feasible = true;     // false when the label cannot be aligned to the frames
  Tensor<S> grad;           // d loss / d logprobs, zeros when infeasible
};

/// Minimum frames needed to emit the label: its length plus one blank
/// between every pair of repeated neighbours.
std::size_t min_frames(const GlossSequence& label);

/// Connectionist temporal classification loss by the forward-backward
/// recursion in log space. logprobs is [T, V+1] with blank in column 0.
/// Rows are treated as free log-scores; the gradient is with respect to them.
template <class S>
CtcResult<S> ctc_loss(const Tensor<S>& logprobs, const GlossSequence& label, bool with_grad = true);

/// Differentiable wrapper around ctc_loss. An infeasible label yields +inf
/// with no gradient.
template <class S>
Var<S> ctc_loss(const Var<S>& logprobs, const GlossSequence& label);

struct CtcConfig {
  int levels = 1;                  // heads contributing, counted from the deepest
  std::vector<double> weights;     // one per contributing level, default all 1
  int beam_width = 10;

  void validate() const;
  double weight(int level) const;
};

/// Weighted sum of ctc_loss over the deepest config.levels heads. Heads are
/// ordered shallow to deep; the last one is the decoding head.
template <class S>
double multilevel_ctc(const std::vector<Tensor<S>>& heads, const GlossSequence& label, const CtcConfig& config);

template <class S>
Var<S> multilevel_ctc(const std::vector<Var<S>>& heads, const GlossSequence& label, const CtcConfig& config);

/// Best path: per-frame argmax, merge repeats, drop blanks.
template <class S>
GlossSequence greedy_decode(const Tensor<S>& logprobs);

/// Prefix beam search: hypotheses sharing a prefix are merged, tracking
/// blank-ending and symbol-ending probability separately. No language model.
/// The surviving prefixes and the best-path label are ranked by exact
/// probability at the end.
template <class S>
GlossSequence beam_decode(const Tensor<S>& logprobs, int width = 10);

}  // namespace tscm::ctc

#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "tscm/gloss.hpp"

namespace tscm::metrics {

/// Edit operations turning a hypothesis into its reference, on one
/// minimum-cost alignment.
struct EditOps {
  std::size_t ins = 0;
  std::size_t del = 0;
  std::size_t sub = 0;
  std::size_t ref_words = 0;

  std::size_t errors() const noexcept { return ins + del + sub; }
  EditOps& operator+=(const EditOps& o) {
    ins += o.ins;
    del += o.del;
    sub += o.sub;
    ref_words += o.ref_words;
    return *this;
  }
};

struct WerResult {
  double percent = 0.0;
  EditOps ops;
};

/// Unit-cost Levenshtein distance.
std::size_t edit_distance(const std::vector<int>& a, const std::vector<int>& b);

/// Counts insertions, deletions and substitutions on a minimum-cost path.
/// Ties prefer a match or substitution, then deletion, then insertion.
EditOps align(const GlossSequence& ref, const GlossSequence& hyp);

/// 100 * (ins + del + sub) / len(ref). Throws on an empty reference.
WerResult wer(const GlossSequence& ref, const GlossSequence& hyp);

struct ScoredPair {
  std::string id;
  GlossSequence ref;
  GlossSequence hyp;
};

/// Pooled over the corpus: total errors over total reference words.
WerResult corpus_wer(const std::vector<ScoredPair>& pairs);

/// CSV rows "id,ref,hyp,ins,del,sub,wer" with tokens rendered through names
/// (names[id]); a pooled "TOTAL" row closes the report.
void write_report_csv(std::ostream& out, const std::vector<ScoredPair>& pairs, const std::vector<std::string>& names);

}  // namespace tscm::metrics

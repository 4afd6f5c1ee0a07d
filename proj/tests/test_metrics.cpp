#include <doctest.h>

#include <sstream>

#include "tscm/metrics.hpp"

using namespace tscm;
using metrics::ScoredPair;

namespace {
GlossSequence seq(std::vector<int> v) { return GlossSequence{std::move(v)}; }
}  // namespace

TEST_CASE("edit distance") {
  CHECK(metrics::edit_distance({1, 2, 3}, {1, 2, 3}) == 0);
  CHECK(metrics::edit_distance({}, {1, 2}) == 2);
  CHECK(metrics::edit_distance({1, 2, 3, 4}, {2, 3, 5}) == 2);
}

TEST_CASE("word error rate with operation counts") {
  auto r = metrics::wer(seq({1, 2, 3, 4}), seq({1, 3, 4, 5}));
  CHECK(r.ops.ins == 1);
  CHECK(r.ops.del == 1);
  CHECK(r.ops.sub == 0);
  CHECK(r.percent == doctest::Approx(50.0));
  CHECK(metrics::wer(seq({1, 2}), seq({1, 2})).percent == 0.0);
  CHECK(metrics::wer(seq({1}), seq({2, 3, 4})).percent == doctest::Approx(300.0));
  CHECK_THROWS_AS(metrics::wer(seq({}), seq({1})), std::invalid_argument);
}

TEST_CASE("corpus pooling") {
  ScoredPair a{"a", seq({1, 2, 3}), seq({1, 2})};
  ScoredPair b{"b", seq({4}), seq({5})};
  CHECK(metrics::corpus_wer({a}).percent == doctest::Approx(metrics::wer(a.ref, a.hyp).percent));
  CHECK(metrics::corpus_wer({a, a}).percent == doctest::Approx(metrics::corpus_wer({a}).percent));
  // 1 deletion + 1 substitution over 4 reference words.
  CHECK(metrics::corpus_wer({a, b}).percent == doctest::Approx(50.0));
  CHECK_THROWS_AS(metrics::corpus_wer({}), std::invalid_argument);
}

TEST_CASE("report csv") {
  std::ostringstream out;
  metrics::write_report_csv(out, {{"s,1", seq({1, 2}), seq({2})}}, {"<blank>", "hi", "yo"});
  CHECK(out.str() == "id,ref,hyp,ins,del,sub,wer\n\"s,1\",hi yo,yo,0,1,0,50.00\nTOTAL,,,0,1,0,50.00\n");
}

#include "tscm/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

namespace tscm::metrics {

namespace {

std::vector<std::size_t> distance_table(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const std::size_t m = ref.size(), n = hyp.size();
  std::vector<std::size_t> d((m + 1) * (n + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (n + 1) + j]; };
  for (std::size_t i = 0; i <= m; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= n; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  return d;
}

std::string render(const GlossSequence& seq, const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int id = seq.tokens[i];
    if (i) out += ' ';
    out += (id >= 0 && static_cast<std::size_t>(id) < names.size()) ? names[id] : std::to_string(id);
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

double percent(const EditOps& ops) {
  return 100.0 * static_cast<double>(ops.errors()) / static_cast<double>(ops.ref_words);
}

}  // namespace

std::size_t edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  return distance_table(a, b).back();
}

EditOps align(const GlossSequence& ref, const GlossSequence& hyp) {
  const auto& r = ref.tokens;
  const auto& h = hyp.tokens;
  const std::size_t n = h.size();
  const auto d = distance_table(r, h);
  auto at = [&](std::size_t i, std::size_t j) { return d[i * (n + 1) + j]; };

  EditOps ops;
  ops.ref_words = r.size();
  std::size_t i = r.size(), j = h.size();
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (r[i - 1] == h[j - 1] ? 0 : 1)) {
      if (r[i - 1] != h[j - 1]) ++ops.sub;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++ops.del;
      --i;
    } else {
      ++ops.ins;
      --j;
    }
  }
  return ops;
}

WerResult wer(const GlossSequence& ref, const GlossSequence& hyp) {
  if (ref.empty()) throw std::invalid_argument("WER is undefined for an empty reference");
  WerResult res;
  res.ops = align(ref, hyp);
  res.percent = percent(res.ops);
  return res;
}

WerResult corpus_wer(const std::vector<ScoredPair>& pairs) {
  WerResult res;
  for (const auto& p : pairs) res.ops += align(p.ref, p.hyp);
  if (res.ops.ref_words == 0) throw std::invalid_argument("corpus WER needs at least one reference word");
  res.percent = percent(res.ops);
  return res;
}

void write_report_csv(std::ostream& out, const std::vector<ScoredPair>& pairs, const std::vector<std::string>& names) {
  out << "id,ref,hyp,ins,del,sub,wer\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& p : pairs) {
    const EditOps ops = align(p.ref, p.hyp);
    out << csv_field(p.id) << ',' << csv_field(render(p.ref, names)) << ',' << csv_field(render(p.hyp, names)) << ','
        << ops.ins << ',' << ops.del << ',' << ops.sub << ',';
    if (ops.ref_words) {
      out << percent(ops);
    } else {
      out << "nan";
    }
    out << '\n';
  }
  if (!pairs.empty()) {
    const WerResult total = corpus_wer(pairs);
    out << "TOTAL,,," << total.ops.ins << ',' << total.ops.del << ',' << total.ops.sub << ',' << total.percent << '\n';
  }
}

}  // namespace tscm::metrics

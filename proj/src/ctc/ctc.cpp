#include "tscm/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "tscm/ops.hpp"

namespace tscm::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

template <class S>
void check_logprobs(const Tensor<S>& logprobs, const GlossSequence& label) {
  if (logprobs.rank() != 2 || logprobs.dim(1) < 2) {
    throw ShapeError("ctc: logprobs must be [T, V+1] with V >= 1, got " + shape_string(logprobs.shape()));
  }
  const int classes = static_cast<int>(logprobs.dim(1));
  for (int token : label.tokens) {
    if (token <= kBlank || token >= classes) {
      throw std::invalid_argument("ctc: label token " + std::to_string(token) + " outside [1, " +
                                  std::to_string(classes - 1) + "]");
    }
  }
}

}  // namespace

std::size_t min_frames(const GlossSequence& label) {
  std::size_t need = label.size();
  for (std::size_t i = 1; i < label.size(); ++i) {
    if (label.tokens[i] == label.tokens[i - 1]) ++need;
  }
  return need;
}

void CtcConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("ctc levels must be >= 1");
  if (!weights.empty() && weights.size() != static_cast<std::size_t>(levels)) {
    throw std::invalid_argument("ctc level weights must have one entry per level");
  }
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("ctc level weights must be positive");
  }
  if (beam_width < 1) throw std::invalid_argument("beam width must be >= 1");
}

double CtcConfig::weight(int level) const { return weights.empty() ? 1.0 : weights.at(level); }

template <class S>
CtcResult<S> ctc_loss(const Tensor<S>& logprobs, const GlossSequence& label, bool with_grad) {
  check_logprobs(logprobs, label);
  const std::size_t t_len = logprobs.dim(0);
  const std::size_t classes = logprobs.dim(1);
  CtcResult<S> result;
  if (with_grad) result.grad = Tensor<S>(logprobs.shape());

  if (t_len == 0 || t_len < min_frames(label)) {
    result.loss = std::numeric_limits<double>::infinity();
    result.feasible = false;
    return result;
  }

  const std::vector<int> ext = label.extended();
  const std::size_t states = ext.size();
  auto lp = [&](std::size_t t, int k) { return static_cast<double>(logprobs[t * classes + static_cast<std::size_t>(k)]); };
  auto skip_allowed = [&](std::size_t s) { return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(t_len * states, kNegInf);
  alpha[0] = lp(0, ext[0]);
  if (states > 1) alpha[1] = lp(0, ext[1]);
  for (std::size_t t = 1; t < t_len; ++t) {
    const double* prev = alpha.data() + (t - 1) * states;
    double* cur = alpha.data() + t * states;
    for (std::size_t s = 0; s < states; ++s) {
      double acc = prev[s];
      if (s >= 1) acc = log_add(acc, prev[s - 1]);
      if (skip_allowed(s)) acc = log_add(acc, prev[s - 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + lp(t, ext[s]);
    }
  }
  const double* last = alpha.data() + (t_len - 1) * states;
  const double log_p = states > 1 ? log_add(last[states - 1], last[states - 2]) : last[0];
  if (log_p == kNegInf || std::isnan(log_p)) {
    result.loss = std::numeric_limits<double>::infinity();
    result.feasible = false;
    return result;
  }
  result.loss = -log_p;
  if (!with_grad) return result;

  std::vector<double> beta(t_len * states, kNegInf);
  double* tail = beta.data() + (t_len - 1) * states;
  tail[states - 1] = lp(t_len - 1, ext[states - 1]);
  if (states > 1) tail[states - 2] = lp(t_len - 1, ext[states - 2]);
  for (std::size_t t = t_len - 1; t-- > 0;) {
    const double* next = beta.data() + (t + 1) * states;
    double* cur = beta.data() + t * states;
    for (std::size_t s = 0; s < states; ++s) {
      double acc = next[s];
      if (s + 1 < states) acc = log_add(acc, next[s + 1]);
      if (s + 2 < states && skip_allowed(s + 2)) acc = log_add(acc, next[s + 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + lp(t, ext[s]);
    }
  }

  // d(-log p)/d lp[t][k] = -sum_{s: ext[s]=k} alpha_t(s) beta_t(s) / (y_t(k) p)
  std::vector<double> occupancy(classes);
  for (std::size_t t = 0; t < t_len; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf);
    for (std::size_t s = 0; s < states; ++s) {
      const std::size_t k = static_cast<std::size_t>(ext[s]);
      occupancy[k] = log_add(occupancy[k], alpha[t * states + s] + beta[t * states + s]);
    }
    for (std::size_t k = 0; k < classes; ++k) {
      if (occupancy[k] == kNegInf) continue;
      result.grad[t * classes + k] = static_cast<S>(-std::exp(occupancy[k] - lp(t, static_cast<int>(k)) - log_p));
    }
  }
  return result;
}

template <class S>
Var<S> ctc_loss(const Var<S>& logprobs, const GlossSequence& label) {
  CtcResult<S> r = ctc_loss(logprobs.value(), label, logprobs.requires_grad());
  Tensor<S> out(Shape{}, {static_cast<S>(r.loss)});
  if (!r.feasible) return Var<S>::constant(std::move(out));
  return make_result<S>(std::move(out), {logprobs}, [grad = std::move(r.grad)](Node<S>& self) {
    if (Tensor<S>* d = parent_grad(self, 0)) {
      const S g = self.grad[0];
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += g * grad[i];
    }
  });
}

template <class S>
double multilevel_ctc(const std::vector<Tensor<S>>& heads, const GlossSequence& label, const CtcConfig& config) {
  config.validate();
  if (heads.size() < static_cast<std::size_t>(config.levels)) {
    throw std::invalid_argument("multilevel ctc: " + std::to_string(config.levels) + " levels requested but only " +
                                std::to_string(heads.size()) + " heads available");
  }
  double total = 0.0;
  const std::size_t first = heads.size() - static_cast<std::size_t>(config.levels);
  for (std::size_t h = first; h < heads.size(); ++h) {
    total += config.weight(static_cast<int>(h - first)) * ctc_loss(heads[h], label, false).loss;
  }
  return total;
}

template <class S>
Var<S> multilevel_ctc(const std::vector<Var<S>>& heads, const GlossSequence& label, const CtcConfig& config) {
  config.validate();
  if (heads.size() < static_cast<std::size_t>(config.levels)) {
    throw std::invalid_argument("multilevel ctc: " + std::to_string(config.levels) + " levels requested but only " +
                                std::to_string(heads.size()) + " heads available");
  }
  Var<S> total;
  const std::size_t first = heads.size() - static_cast<std::size_t>(config.levels);
  for (std::size_t h = first; h < heads.size(); ++h) {
    Var<S> term = ops::scale(ctc_loss(heads[h], label), static_cast<S>(config.weight(static_cast<int>(h - first))));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

template <class S>
GlossSequence greedy_decode(const Tensor<S>& logprobs) {
  check_logprobs(logprobs, GlossSequence{});
  const std::size_t classes = logprobs.dim(1);
  GlossSequence out;
  int previous = kBlank;
  for (std::size_t t = 0; t < logprobs.dim(0); ++t) {
    const S* row = logprobs.data() + t * classes;
    const int best = static_cast<int>(std::max_element(row, row + classes) - row);
    if (best != kBlank && best != previous) out.tokens.push_back(best);
    previous = best;
  }
  return out;
}

template <class S>
GlossSequence beam_decode(const Tensor<S>& logprobs, int width) {
  check_logprobs(logprobs, GlossSequence{});
  if (width < 1) throw std::invalid_argument("beam width must be >= 1");
  const std::size_t classes = logprobs.dim(1);

  struct Score {
    double blank = kNegInf;     // paths ending in blank
    double symbol = kNegInf;    // paths ending in the prefix's last symbol
    double total() const { return log_add(blank, symbol); }
  };
  using Beam = std::map<std::vector<int>, Score>;

  Beam beam;
  beam[{}].blank = 0.0;
  for (std::size_t t = 0; t < logprobs.dim(0); ++t) {
    const S* row = logprobs.data() + t * classes;
    Beam next;
    for (const auto& [prefix, score] : beam) {
      const double total = score.total();
      Score& same = next[prefix];
      same.blank = log_add(same.blank, total + static_cast<double>(row[kBlank]));
      for (std::size_t k = 1; k < classes; ++k) {
        const int sym = static_cast<int>(k);
        const double p = static_cast<double>(row[k]);
        if (!prefix.empty() && prefix.back() == sym) {
          // Repeat without a blank collapses into the same prefix; after a
          // blank it extends the prefix.
          same.symbol = log_add(same.symbol, score.symbol + p);
          std::vector<int> extended = prefix;
          extended.push_back(sym);
          Score& ext = next[extended];
          ext.symbol = log_add(ext.symbol, score.blank + p);
        } else {
          std::vector<int> extended = prefix;
          extended.push_back(sym);
          Score& ext = next[extended];
          ext.symbol = log_add(ext.symbol, total + p);
        }
      }
    }
    if (next.size() > static_cast<std::size_t>(width)) {
      std::vector<std::pair<std::vector<int>, Score>> ranked(next.begin(), next.end());
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.second.total() > b.second.total(); });
      ranked.resize(static_cast<std::size_t>(width));
      next = Beam(ranked.begin(), ranked.end());
    }
    beam = std::move(next);
  }

  // Pruning drops mass from the running scores, so the survivors and the
  // best-path label are ranked by their exact probability.
  std::vector<std::vector<int>> candidates;
  for (const auto& entry : beam) candidates.push_back(entry.first);
  candidates.push_back(greedy_decode(logprobs).tokens);
  GlossSequence best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (auto& c : candidates) {
    GlossSequence label{std::move(c)};
    const double loss = ctc_loss(logprobs, label, false).loss;
    if (loss < best_loss) {
      best_loss = loss;
      best = std::move(label);
    }
  }
  return best;
}

#define TSCM_INSTANTIATE_CTC(S)                                                                                \
  template CtcResult<S> ctc_loss(const Tensor<S>&, const GlossSequence&, bool);                              \
  template Var<S> ctc_loss(const Var<S>&, const GlossSequence&);                                              \
  template double multilevel_ctc(const std::vector<Tensor<S>>&, const GlossSequence&, const CtcConfig&);      \
  template Var<S> multilevel_ctc(const std::vector<Var<S>>&, const GlossSequence&, const CtcConfig&);         \
  template GlossSequence greedy_decode(const Tensor<S>&);                                                     \
  template GlossSequence beam_decode(const Tensor<S>&, int);

TSCM_INSTANTIATE_CTC(float)
TSCM_INSTANTIATE_CTC(double)
#undef TSCM_INSTANTIATE_CTC

}  // namespace tscm::ctc

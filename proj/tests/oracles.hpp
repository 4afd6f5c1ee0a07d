#pragma once

// Independent reference implementations used only by the tests: plain nested
// loops, exhaustive enumeration and central finite differences.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "tscm/autodiff.hpp"
#include "tscm/gloss.hpp"
#include "tscm/ops.hpp"
#include "tscm/shift.hpp"

namespace oracle {

using tscm::Shape;
using tscm::Tensor;
using tscm::Var;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// x [T,Ci,H,W], w [Co,Ci,kt,kh,kw]; stride and pad ordered (t,h,w).
inline Tensor<double> conv3d(const Tensor<double>& x, const Tensor<double>& w, std::array<long, 3> stride,
                             std::array<long, 3> pad) {
  const long T = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const long Co = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  const long To = (T + 2 * pad[0] - kt) / stride[0] + 1;
  const long Ho = (H + 2 * pad[1] - kh) / stride[1] + 1;
  const long Wo = (W + 2 * pad[2] - kw) / stride[2] + 1;
  Tensor<double> y(Shape{std::size_t(To), std::size_t(Co), std::size_t(Ho), std::size_t(Wo)});
  for (long t = 0; t < To; ++t)
    for (long o = 0; o < Co; ++o)
      for (long i = 0; i < Ho; ++i)
        for (long j = 0; j < Wo; ++j) {
          double acc = 0.0;
          for (long c = 0; c < Ci; ++c)
            for (long a = 0; a < kt; ++a)
              for (long b = 0; b < kh; ++b)
                for (long d = 0; d < kw; ++d) {
                  const long st = t * stride[0] - pad[0] + a;
                  const long sh = i * stride[1] - pad[1] + b;
                  const long sw = j * stride[2] - pad[2] + d;
                  if (st < 0 || st >= T || sh < 0 || sh >= H || sw < 0 || sw >= W) continue;
                  acc += w[(((o * Ci + c) * kt + a) * kh + b) * kw + d] * x[((st * Ci + c) * H + sh) * W + sw];
                }
          y[((t * Co + o) * Ho + i) * Wo + j] = acc;
        }
  return y;
}

template <class S>
Tensor<S> shift(const Tensor<S>& x, const tscm::shift::ChannelOffsetMap& map) {
  Tensor<S> out(x.shape());
  const long T = static_cast<long>(x.dim(0));
  const std::size_t C = x.dim(1);
  const std::size_t inner = x.size() / (x.dim(0) * C);
  for (long t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c) {
      const long src = t + map.offsets[c];
      if (src < 0 || src >= T) continue;
      for (std::size_t k = 0; k < inner; ++k) out[(t * C + c) * inner + k] = x[(src * C + c) * inner + k];
    }
  return out;
}

// Rows of log-probabilities from random logits with the given spread.
inline Tensor<double> random_logprobs(std::size_t T, std::size_t classes, std::mt19937_64& rng, double spread = 2.0) {
  Tensor<double> lp = random_tensor({T, classes}, rng, -spread, spread);
  for (std::size_t t = 0; t < T; ++t) {
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += std::exp(lp[t * classes + k]);
    for (std::size_t k = 0; k < classes; ++k) lp[t * classes + k] -= std::log(z);
  }
  return lp;
}

inline std::vector<int> collapse(const std::vector<int>& path) {
  std::vector<int> out;
  int prev = -1;
  for (int s : path) {
    if (s != tscm::kBlank && s != prev) out.push_back(s);
    prev = s;
  }
  return out;
}

// Visits every length-T path over `classes` symbols.
inline void for_each_path(std::size_t T, std::size_t classes, const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> path(T, 0);
  while (true) {
    f(path);
    std::size_t i = 0;
    while (i < T && ++path[i] == static_cast<int>(classes)) path[i++] = 0;
    if (i == T) return;
  }
}

inline double path_logprob(const Tensor<double>& lp, const std::vector<int>& path) {
  double s = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) s += lp[t * lp.dim(1) + path[t]];
  return s;
}

// -log sum over all paths collapsing to the label.
inline double ctc_brute_force(const Tensor<double>& lp, const tscm::GlossSequence& label) {
  double p = 0.0;
  for_each_path(lp.dim(0), lp.dim(1), [&](const std::vector<int>& path) {
    if (collapse(path) == label.tokens) p += std::exp(path_logprob(lp, path));
  });
  return -std::log(p);
}

// Label sequence with the highest total probability, by enumeration.
inline std::pair<tscm::GlossSequence, double> map_brute_force(const Tensor<double>& lp) {
  std::map<std::vector<int>, double> mass;
  for_each_path(lp.dim(0), lp.dim(1),
                [&](const std::vector<int>& path) { mass[collapse(path)] += std::exp(path_logprob(lp, path)); });
  auto best = std::max_element(mass.begin(), mass.end(), [](auto& a, auto& b) { return a.second < b.second; });
  return {tscm::GlossSequence{best->first}, best->second};
}

// Norm-wise relative error between analytic and central-difference gradients
// of f with respect to every input, step h.
inline double gradient_error(const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
                             std::vector<Tensor<double>> inputs, double h = 1e-5) {
  std::vector<Var<double>> vars;
  for (auto& t : inputs) vars.push_back(Var<double>::parameter(t));
  tscm::backward(f(vars));
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double> analytic = vars[i].grad();
    Tensor<double> numeric(inputs[i].shape());
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      auto eval = [&](double delta) {
        std::vector<Var<double>> probe;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor<double> t = inputs[j];
          if (j == i) t[k] += delta;
          probe.push_back(Var<double>::constant(std::move(t)));
        }
        return f(probe).value()[0];
      };
      numeric[k] = (eval(h) - eval(-h)) / (2 * h);
    }
    double diff = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      diff = std::max(diff, std::abs(analytic[k] - numeric[k]));
      scale = std::max(scale, std::abs(numeric[k]));
    }
    worst = std::max(worst, diff / std::max(scale, 1e-6));
  }
  return worst;
}

}  // namespace oracle

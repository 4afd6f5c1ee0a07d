#include "tscm/shift.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include "tscm/ops.hpp"

namespace tscm::shift {

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::crossover: return "crossover";
    case Mode::superposition: return "superposition";
    case Mode::random_crossover: return "random_crossover";
    case Mode::tsm: return "tsm";
    case Mode::identity: return "identity";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  if (name == "crossover") return Mode::crossover;
  if (name == "superposition") return Mode::superposition;
  if (name == "random_crossover" || name == "random") return Mode::random_crossover;
  if (name == "tsm") return Mode::tsm;
  if (name == "identity") return Mode::identity;
  throw std::invalid_argument("unknown temporal mixing mode '" + std::string(name) + "'");
}

void TscmSpec::validate() const {
  if (span < 3 || span % 2 == 0) {
    throw std::invalid_argument("span must be an odd integer >= 3, got " + std::to_string(span));
  }
  if (mode == Mode::tsm && !(tsm_fraction > 0.0 && tsm_fraction <= 1.0)) {
    throw std::invalid_argument("tsm_fraction must lie in (0, 1]");
  }
}

bool ChannelOffsetMap::is_identity() const noexcept {
  return std::all_of(offsets.begin(), offsets.end(), [](int o) { return o == 0; });
}

ChannelOffsetMap build_offset_map(const TscmSpec& spec, std::size_t channels) {
  spec.validate();
  if (channels == 0) throw std::invalid_argument("offset map needs at least one channel");
  const int n = spec.span;
  const int half = (n - 1) / 2;
  // Channels past the last full group of n keep offset 0.
  const std::size_t group = channels / static_cast<std::size_t>(n);
  const std::size_t covered = group * static_cast<std::size_t>(n);

  ChannelOffsetMap map;
  map.offsets.assign(channels, 0);
  switch (spec.mode) {
    case Mode::crossover:
      for (std::size_t c = 0; c < covered; ++c) map.offsets[c] = static_cast<int>(c % n) - half;
      break;
    case Mode::superposition:
      for (std::size_t c = 0; c < covered; ++c) map.offsets[c] = static_cast<int>(c / group) - half;
      break;
    case Mode::random_crossover: {
      std::mt19937_64 rng(spec.seed);
      for (std::size_t c = 0; c < covered; ++c) map.offsets[c] = static_cast<int>(rng() % n) - half;
      break;
    }
    case Mode::tsm: {
      const auto each = static_cast<std::size_t>(static_cast<double>(channels) * spec.tsm_fraction / 2.0);
      for (std::size_t c = 0; c < each; ++c) map.offsets[c] = -1;
      for (std::size_t c = each; c < 2 * each; ++c) map.offsets[c] = 1;
      break;
    }
    case Mode::identity:
      break;
  }
  return map;
}

namespace {

void check_map(const Shape& shape, const ChannelOffsetMap& map, const char* op) {
  if (shape.size() < 2) throw ShapeError(std::string(op) + ": input must be [T,C,...], got " + shape_string(shape));
  if (shape[1] != map.channels()) {
    throw ShapeError(std::string(op) + ": offset map covers " + std::to_string(map.channels()) +
                     " channels but input has " + std::to_string(shape[1]));
  }
}

std::size_t plane_size(const Shape& shape) {
  std::size_t p = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) p *= shape[i];
  return p;
}

}  // namespace

template <class S>
Tensor<S> apply(const Tensor<S>& x, const ChannelOffsetMap& map) {
  check_map(x.shape(), map, "shift::apply");
  const std::size_t t = x.dim(0), c = x.dim(1), plane = plane_size(x.shape());
  Tensor<S> out(x.shape());
  for (std::size_t f = 0; f < t; ++f) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const long src = static_cast<long>(f) + map.offsets[ch];
      if (src < 0 || src >= static_cast<long>(t)) continue;
      std::copy_n(x.data() + (static_cast<std::size_t>(src) * c + ch) * plane, plane, out.data() + (f * c + ch) * plane);
    }
  }
  return out;
}

template <class S>
Tensor<S> apply_backward(const Tensor<S>& grad_out, const ChannelOffsetMap& map) {
  check_map(grad_out.shape(), map, "shift::apply_backward");
  const std::size_t t = grad_out.dim(0), c = grad_out.dim(1), plane = plane_size(grad_out.shape());
  Tensor<S> grad_in(grad_out.shape());
  for (std::size_t f = 0; f < t; ++f) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const long src = static_cast<long>(f) + map.offsets[ch];
      if (src < 0 || src >= static_cast<long>(t)) continue;
      const S* g = grad_out.data() + (f * c + ch) * plane;
      S* d = grad_in.data() + (static_cast<std::size_t>(src) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) d[i] += g[i];
    }
  }
  return grad_in;
}

template <class S>
Var<S> temporal_shift(const Var<S>& x, const ChannelOffsetMap& map) {
  if (map.is_identity()) {
    check_map(x.shape(), map, "shift::temporal_shift");
    return x;
  }
  return make_result<S>(apply(x.value(), map), {x}, [map](Node<S>& self) {
    if (Tensor<S>* dx = parent_grad(self, 0)) {
      const Tensor<S> g = apply_backward(self.grad, map);
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i];
    }
  });
}

template <class S>
std::pair<Tensor<S>, Tensor<S>> stacked_equivalence_reference(const Tensor<S>& x, const Tensor<S>& w,
                                                               bool corrupt_arrangement) {
  if (x.rank() != 2) throw ShapeError("stacked reference: series must be [T,C], got " + shape_string(x.shape()));
  if (w.rank() != 3 || w.dim(2) != 3 || w.dim(1) != x.dim(1)) {
    throw ShapeError("stacked reference: weights must be [Co," + std::to_string(x.dim(1)) + ",3], got " +
                     shape_string(w.shape()));
  }
  const std::size_t t = x.dim(0), c = x.dim(1), co = w.dim(0);
  if (t < 3) throw ShapeError("stacked reference: need at least 3 frames");

  // Route 1: temporal convolution, kernel 3, no padding.
  Tensor<S> conv =
      ops::conv3d_forward(x.reshaped(Shape{t, c, 1, 1}), w, ops::KernelDims{3, 1, 1}, ops::ConvParams{});
  conv = conv.reshaped(Shape{t - 2, co});

  // Route 2: full channel stacking, then a pointwise product with W'.
  const std::size_t wide = 3 * c;
  Tensor<S> stacked(Shape{t - 2, wide});
  for (std::size_t i = 1; i + 1 < t; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      std::copy_n(x.data() + (i - 1 + j) * c, c, stacked.data() + (i - 1) * wide + j * c);
    }
  }
  Tensor<S> wprime(Shape{co, wide});
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t j = 0; j < 3; ++j) {
      const std::size_t block = corrupt_arrangement ? 2 - j : j;
      for (std::size_t ch = 0; ch < c; ++ch) wprime[o * wide + block * c + ch] = w[(o * c + ch) * 3 + j];
    }
  }
  Tensor<S> pointwise(Shape{t - 2, co});
  for (std::size_t i = 0; i + 2 < t; ++i) {
    for (std::size_t o = 0; o < co; ++o) {
      S acc{0};
      for (std::size_t k = 0; k < wide; ++k) acc += wprime[o * wide + k] * stacked[i * wide + k];
      pointwise[i * co + o] = acc;
    }
  }
  return {std::move(conv), std::move(pointwise)};
}

#define TSCM_INSTANTIATE_SHIFT(S)                                                                    \
  template Tensor<S> apply(const Tensor<S>&, const ChannelOffsetMap&);                              \
  template Tensor<S> apply_backward(const Tensor<S>&, const ChannelOffsetMap&);                     \
  template Var<S> temporal_shift(const Var<S>&, const ChannelOffsetMap&);                           \
  template std::pair<Tensor<S>, Tensor<S>> stacked_equivalence_reference(const Tensor<S>&, const Tensor<S>&, bool);

TSCM_INSTANTIATE_SHIFT(float)
TSCM_INSTANTIATE_SHIFT(double)
#undef TSCM_INSTANTIATE_SHIFT

}  // namespace tscm::shift

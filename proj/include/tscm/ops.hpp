#pragma once

// Differentiable operations over T x C x H x W feature maps. Every op checks
// its operand shapes and throws ShapeError with the offending dimensions.

#include <array>
#include <cstddef>

#include "tscm/autodiff.hpp"

namespace tscm::ops {

/// Strides and zero padding for a convolution, ordered (time, height, width).
struct ConvParams {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
};

/// Kernel extent of a convolution weight, ordered (time, height, width).
using KernelDims = std::array<std::size_t, 3>;

/// Output length of a strided window sweep: floor((n + 2p - k) / s) + 1.
std::size_t conv_out_size(std::size_t n, std::size_t k, std::size_t stride, std::size_t pad);

/// Bias-free convolution of x [T,Ci,H,W] with w [Co,Ci,kt,kh,kw].
template <class S>
Var<S> conv3d(const Var<S>& x, const Var<S>& w, const ConvParams& params);

/// Per-frame spatial convolution, w [Co,Ci,kh,kw]. Time length is unchanged.
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, std::size_t stride, std::size_t pad);

/// Convolution along time only, w [Co,Ci,kt].
template <class S>
Var<S> conv1d_temporal(const Var<S>& x, const Var<S>& w, std::size_t stride, std::size_t pad);

template <class S>
Var<S> relu(const Var<S>& x);

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b);

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b);

template <class S>
Var<S> scale(const Var<S>& x, S factor);

/// Sum of all elements, as a rank-0 value.
template <class S>
Var<S> sum(const Var<S>& x);

/// Same value, cut from the graph: nothing upstream receives a gradient.
template <class S>
Var<S> detach(const Var<S>& x);

template <class S>
struct NormState {
  Tensor<S> running_mean;
  Tensor<S> running_var;
  S momentum = S(0.1);
  S eps = S(1e-5);

  NormState() = default;
  explicit NormState(std::size_t channels)
      : running_mean(Shape{channels}), running_var(Tensor<S>::filled(Shape{channels}, S{1})) {}
};

/// Per-channel normalisation over (T,H,W) with learnable scale and shift.
/// Training uses the statistics of x and updates the running averages; eval
/// uses the running averages and leaves the state untouched.
template <class S>
Var<S> channel_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, NormState<S>& state, bool training);

template <class S>
Var<S> maxpool2d(const Var<S>& x, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Max over windows of frames; the 1D-MaxPool that downsamples time.
template <class S>
Var<S> maxpool1d_temporal(const Var<S>& x, std::size_t kernel, std::size_t stride);

/// [T,C,H,W] -> [T,C]
template <class S>
Var<S> global_avgpool_spatial(const Var<S>& x);

/// x [T,Cin], w [V,Cin], b [V] -> [T,V]
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b);

/// Row-wise log-softmax over the last axis of a [T,V] input.
template <class S>
Var<S> log_softmax(const Var<S>& x);

// Forward-only reference paths shared with other modules.
template <class S>
Tensor<S> conv3d_forward(const Tensor<S>& x, const Tensor<S>& w, const KernelDims& kernel, const ConvParams& params);

}  // namespace tscm::ops

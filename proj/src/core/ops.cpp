#include "tscm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tscm/kernels.hpp"

namespace tscm::ops {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

template <class S>
void require_rank(const Var<S>& v, std::size_t rank, const char* op) {
  require(v.defined(), std::string(op) + ": undefined input");
  require(v.value().rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
                                        shape_string(v.shape()));
}

template <class S>
void debug_check(const char* op, const Tensor<S>& out) {
#ifndef NDEBUG
  if (!all_finite(out)) throw std::runtime_error(std::string(op) + ": produced a non-finite value");
#else
  (void)op;
  (void)out;
#endif
}

struct ConvGeometry {
  std::size_t t, ci, h, w;
  std::size_t co;
  KernelDims k;
  ConvParams p;
  std::size_t to, ho, wo;

  std::size_t rows() const { return ci * k[0] * k[1] * k[2]; }
  std::size_t cols() const { return to * ho * wo; }
};

ConvGeometry conv_geometry(const Shape& xs, std::size_t co, std::size_t ci, const KernelDims& k, const ConvParams& p,
                           const char* op) {
  require(xs.size() == 4, std::string(op) + ": input must be [T,C,H,W], got " + shape_string(xs));
  for (std::size_t s : p.stride) require(s >= 1, std::string(op) + ": stride must be >= 1");
  require(xs[1] == ci, std::string(op) + ": input has " + std::to_string(xs[1]) + " channels but weights expect " +
                           std::to_string(ci));
  const std::array<std::size_t, 3> dims{xs[0], xs[2], xs[3]};
  for (int a = 0; a < 3; ++a) {
    require(k[a] >= 1 && dims[a] + 2 * p.pad[a] >= k[a],
            std::string(op) + ": kernel extent " + std::to_string(k[a]) + " exceeds padded input extent " +
                std::to_string(dims[a] + 2 * p.pad[a]) + " on axis " + std::to_string(a));
  }
  ConvGeometry g{xs[0], ci, xs[2], xs[3], co, k, p, 0, 0, 0};
  g.to = conv_out_size(g.t, k[0], p.stride[0], p.pad[0]);
  g.ho = conv_out_size(g.h, k[1], p.stride[1], p.pad[1]);
  g.wo = conv_out_size(g.w, k[2], p.stride[2], p.pad[2]);
  return g;
}

// cols[r][q], r = ((ci*kt + a)*kh + b)*kw + c, q = (to*Ho + ho)*Wo + wo
template <class S>
void im2col(const ConvGeometry& g, const S* x, S* cols) {
  const std::size_t ncols = g.cols();
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t a = 0; a < g.k[0]; ++a) {
      for (std::size_t b = 0; b < g.k[1]; ++b) {
        for (std::size_t e = 0; e < g.k[2]; ++e, ++r) {
          S* out = cols + r * ncols;
          std::size_t q = 0;
          for (std::size_t ot = 0; ot < g.to; ++ot) {
            const long it = static_cast<long>(ot * g.p.stride[0] + a) - static_cast<long>(g.p.pad[0]);
            const bool t_ok = it >= 0 && it < static_cast<long>(g.t);
            for (std::size_t oh = 0; oh < g.ho; ++oh) {
              const long ih = static_cast<long>(oh * g.p.stride[1] + b) - static_cast<long>(g.p.pad[1]);
              const bool h_ok = t_ok && ih >= 0 && ih < static_cast<long>(g.h);
              const S* xrow = h_ok ? x + ((static_cast<std::size_t>(it) * g.ci + c) * g.h + ih) * g.w : nullptr;
              for (std::size_t ow = 0; ow < g.wo; ++ow, ++q) {
                const long iw = static_cast<long>(ow * g.p.stride[2] + e) - static_cast<long>(g.p.pad[2]);
                out[q] = (h_ok && iw >= 0 && iw < static_cast<long>(g.w)) ? xrow[iw] : S{0};
              }
            }
          }
        }
      }
    }
  }
}

template <class S>
void col2im(const ConvGeometry& g, const S* cols, S* dx) {
  const std::size_t ncols = g.cols();
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t a = 0; a < g.k[0]; ++a) {
      for (std::size_t b = 0; b < g.k[1]; ++b) {
        for (std::size_t e = 0; e < g.k[2]; ++e, ++r) {
          const S* in = cols + r * ncols;
          std::size_t q = 0;
          for (std::size_t ot = 0; ot < g.to; ++ot) {
            const long it = static_cast<long>(ot * g.p.stride[0] + a) - static_cast<long>(g.p.pad[0]);
            const bool t_ok = it >= 0 && it < static_cast<long>(g.t);
            for (std::size_t oh = 0; oh < g.ho; ++oh) {
              const long ih = static_cast<long>(oh * g.p.stride[1] + b) - static_cast<long>(g.p.pad[1]);
              const bool h_ok = t_ok && ih >= 0 && ih < static_cast<long>(g.h);
              if (!h_ok) {
                q += g.wo;
                continue;
              }
              S* xrow = dx + ((static_cast<std::size_t>(it) * g.ci + c) * g.h + ih) * g.w;
              for (std::size_t ow = 0; ow < g.wo; ++ow, ++q) {
                const long iw = static_cast<long>(ow * g.p.stride[2] + e) - static_cast<long>(g.p.pad[2]);
                if (iw >= 0 && iw < static_cast<long>(g.w)) xrow[iw] += in[q];
              }
            }
          }
        }
      }
    }
  }
}

// [Co][To*Ho*Wo] <-> [To][Co][Ho*Wo]
template <class S>
void channel_major_to_time_major(const ConvGeometry& g, const S* src, S* dst) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t c = 0; c < g.co; ++c) {
    for (std::size_t t = 0; t < g.to; ++t) {
      std::copy_n(src + (c * g.to + t) * plane, plane, dst + (t * g.co + c) * plane);
    }
  }
}

template <class S>
void time_major_to_channel_major(const ConvGeometry& g, const S* src, S* dst) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t t = 0; t < g.to; ++t) {
    for (std::size_t c = 0; c < g.co; ++c) {
      std::copy_n(src + (t * g.co + c) * plane, plane, dst + (c * g.to + t) * plane);
    }
  }
}

template <class S>
Var<S> conv_general(const Var<S>& x, const Var<S>& w, const KernelDims& k, const ConvParams& params, const char* op) {
  require(x.defined() && w.defined(), std::string(op) + ": undefined input");
  const Shape& ws = w.shape();
  require(ws.size() >= 2, std::string(op) + ": weight must carry [Co,Ci,...], got " + shape_string(ws));
  const std::size_t co = ws[0];
  const std::size_t ci = ws[1];
  require(w.value().size() == co * ci * k[0] * k[1] * k[2],
          std::string(op) + ": weight " + shape_string(ws) + " does not match its kernel extent");
  const ConvGeometry g = conv_geometry(x.shape(), co, ci, k, params, op);

  const std::size_t rows = g.rows();
  const std::size_t ncols = g.cols();
  Tensor<S> cols(Shape{rows, ncols});
  im2col(g, x.value().data(), cols.data());

  std::vector<S> y(co * ncols, S{0});
  kernels::gemm_acc(co, ncols, rows, w.value().data(), rows, cols.data(), ncols, y.data(), ncols);
  Tensor<S> out(Shape{g.to, co, g.ho, g.wo});
  channel_major_to_time_major(g, y.data(), out.data());
  debug_check(op, out);

  return make_result<S>(std::move(out), {x, w}, [g, cols = std::move(cols)](Node<S>& self) {
    const std::size_t rows = g.rows();
    const std::size_t ncols = g.cols();
    std::vector<S> dy(g.co * ncols);
    time_major_to_channel_major(g, self.grad.data(), dy.data());
    const Tensor<S>& wv = self.parents[1]->value;
    if (Tensor<S>* dw = parent_grad(self, 1)) {
      kernels::gemm<S>(false, true, g.co, rows, ncols, S{1}, dy.data(), ncols, cols.data(), ncols, S{1}, dw->data(),
                       rows);
    }
    if (Tensor<S>* dx = parent_grad(self, 0)) {
      std::vector<S> dcols(rows * ncols, S{0});
      kernels::gemm<S>(true, false, rows, ncols, g.co, S{1}, wv.data(), rows, dy.data(), ncols, S{0}, dcols.data(),
                       ncols);
      col2im(g, dcols.data(), dx->data());
    }
  });
}

template <class S>
void require_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  require(a.defined() && b.defined(), std::string(op) + ": undefined input");
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

std::size_t conv_out_size(std::size_t n, std::size_t k, std::size_t stride, std::size_t pad) {
  if (n + 2 * pad < k) throw ShapeError("window " + std::to_string(k) + " larger than padded extent");
  return (n + 2 * pad - k) / stride + 1;
}

template <class S>
Var<S> conv3d(const Var<S>& x, const Var<S>& w, const ConvParams& params) {
  require_rank(w, 5, "conv3d");
  const Shape& ws = w.shape();
  return conv_general(x, w, KernelDims{ws[2], ws[3], ws[4]}, params, "conv3d");
}

template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, std::size_t stride, std::size_t pad) {
  require_rank(w, 4, "conv2d");
  const Shape& ws = w.shape();
  ConvParams p;
  p.stride = {1, stride, stride};
  p.pad = {0, pad, pad};
  return conv_general(x, w, KernelDims{1, ws[2], ws[3]}, p, "conv2d");
}

template <class S>
Var<S> conv1d_temporal(const Var<S>& x, const Var<S>& w, std::size_t stride, std::size_t pad) {
  require_rank(w, 3, "conv1d_temporal");
  ConvParams p;
  p.stride = {stride, 1, 1};
  p.pad = {pad, 0, 0};
  return conv_general(x, w, KernelDims{w.shape()[2], 1, 1}, p, "conv1d_temporal");
}

template <class S>
Tensor<S> conv3d_forward(const Tensor<S>& x, const Tensor<S>& w, const KernelDims& kernel, const ConvParams& params) {
  NoGradGuard guard;
  return conv_general(Var<S>::constant(x), Var<S>::constant(w), kernel, params, "conv3d_forward").value();
}

template <class S>
Var<S> relu(const Var<S>& x) {
  require(x.defined(), "relu: undefined input");
  Tensor<S> out(x.shape());
  kernels::relu(out.size(), x.value().data(), out.data());
  return make_result<S>(std::move(out), {x}, [](Node<S>& self) {
    if (Tensor<S>* dx = parent_grad(self, 0)) {
      kernels::relu_backward(dx->size(), self.parents[0]->value.data(), self.grad.data(), dx->data());
    }
  });
}

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a, b, "add");
  Tensor<S> out = a.value();
  kernels::axpy(out.size(), S{1}, b.value().data(), out.data());
  return make_result<S>(std::move(out), {a, b}, [](Node<S>& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (Tensor<S>* d = parent_grad(self, i)) kernels::axpy(d->size(), S{1}, self.grad.data(), d->data());
    }
  });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a, b, "mul");
  Tensor<S> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<S>(std::move(out), {a, b}, [](Node<S>& self) {
    const Tensor<S>& av = self.parents[0]->value;
    const Tensor<S>& bv = self.parents[1]->value;
    if (Tensor<S>* da = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < da->size(); ++i) (*da)[i] += self.grad[i] * bv[i];
    }
    if (Tensor<S>* db = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < db->size(); ++i) (*db)[i] += self.grad[i] * av[i];
    }
  });
}

template <class S>
Var<S> scale(const Var<S>& x, S factor) {
  require(x.defined(), "scale: undefined input");
  Tensor<S> out(x.shape());
  kernels::axpy(out.size(), factor, x.value().data(), out.data());
  return make_result<S>(std::move(out), {x}, [factor](Node<S>& self) {
    if (Tensor<S>* dx = parent_grad(self, 0)) kernels::axpy(dx->size(), factor, self.grad.data(), dx->data());
  });
}

template <class S>
Var<S> sum(const Var<S>& x) {
  require(x.defined(), "sum: undefined input");
  S total{0};
  for (S v : x.value().values()) total += v;
  Tensor<S> out(Shape{}, {total});
  return make_result<S>(std::move(out), {x}, [](Node<S>& self) {
    if (Tensor<S>* dx = parent_grad(self, 0)) {
      const S g = self.grad[0];
      for (S& v : dx->values()) v += g;
    }
  });
}

template <class S>
Var<S> detach(const Var<S>& x) {
  require(x.defined(), "detach: undefined input");
  return Var<S>::constant(x.value());
}

template <class S>
Var<S> channel_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, NormState<S>& state, bool training) {
  require_rank(x, 4, "channel_norm");
  const Shape& xs = x.shape();
  const std::size_t t = xs[0], c = xs[1], plane = xs[2] * xs[3];
  require(gamma.defined() && beta.defined() && gamma.value().size() == c && beta.value().size() == c,
          "channel_norm: scale/shift must have " + std::to_string(c) + " entries");
  require(state.running_mean.size() == c && state.running_var.size() == c,
          "channel_norm: running statistics must have " + std::to_string(c) + " entries");
  const std::size_t count = t * plane;

  Tensor<S> mean(Shape{c});
  Tensor<S> inv_std(Shape{c});
  const S* xv = x.value().data();
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double m = 0.0;
      for (std::size_t f = 0; f < t; ++f) {
        const S* p = xv + (f * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) m += p[i];
      }
      m /= static_cast<double>(count);
      double v = 0.0;
      for (std::size_t f = 0; f < t; ++f) {
        const S* p = xv + (f * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      v /= static_cast<double>(count);
      mean[ch] = static_cast<S>(m);
      inv_std[ch] = static_cast<S>(1.0 / std::sqrt(v + state.eps));
      const double unbiased = count > 1 ? v * count / (count - 1) : v;
      state.running_mean[ch] = (S{1} - state.momentum) * state.running_mean[ch] + state.momentum * static_cast<S>(m);
      state.running_var[ch] =
          (S{1} - state.momentum) * state.running_var[ch] + state.momentum * static_cast<S>(unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = S{1} / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  Tensor<S> xhat(xs);
  Tensor<S> out(xs);
  for (std::size_t f = 0; f < t; ++f) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (f * c + ch) * plane;
      const S g = gamma.value()[ch], b = beta.value()[ch], m = mean[ch], is = inv_std[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        const S h = (xv[base + i] - m) * is;
        xhat[base + i] = h;
        out[base + i] = g * h + b;
      }
    }
  }
  debug_check("channel_norm", out);

  return make_result<S>(std::move(out), {x, gamma, beta},
                        [xhat = std::move(xhat), inv_std, training, t, c, plane, count](Node<S>& self) {
                          const Tensor<S>& gv = self.parents[1]->value;
                          const S* dy = self.grad.data();
                          std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
                          for (std::size_t f = 0; f < t; ++f) {
                            for (std::size_t ch = 0; ch < c; ++ch) {
                              const std::size_t base = (f * c + ch) * plane;
                              for (std::size_t i = 0; i < plane; ++i) {
                                sum_dy[ch] += dy[base + i];
                                sum_dy_xhat[ch] += dy[base + i] * xhat[base + i];
                              }
                            }
                          }
                          if (Tensor<S>* dg = parent_grad(self, 1)) {
                            for (std::size_t ch = 0; ch < c; ++ch) (*dg)[ch] += static_cast<S>(sum_dy_xhat[ch]);
                          }
                          if (Tensor<S>* db = parent_grad(self, 2)) {
                            for (std::size_t ch = 0; ch < c; ++ch) (*db)[ch] += static_cast<S>(sum_dy[ch]);
                          }
                          if (Tensor<S>* dx = parent_grad(self, 0)) {
                            for (std::size_t f = 0; f < t; ++f) {
                              for (std::size_t ch = 0; ch < c; ++ch) {
                                const std::size_t base = (f * c + ch) * plane;
                                const S k = gv[ch] * inv_std[ch];
                                if (training) {
                                  const S mdy = static_cast<S>(sum_dy[ch] / count);
                                  const S mdyx = static_cast<S>(sum_dy_xhat[ch] / count);
                                  for (std::size_t i = 0; i < plane; ++i) {
                                    (*dx)[base + i] += k * (dy[base + i] - mdy - xhat[base + i] * mdyx);
                                  }
                                } else {
                                  for (std::size_t i = 0; i < plane; ++i) (*dx)[base + i] += k * dy[base + i];
                                }
                              }
                            }
                          }
                        });
}

template <class S>
Var<S> maxpool2d(const Var<S>& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require_rank(x, 4, "maxpool2d");
  require(stride >= 1 && kernel >= 1, "maxpool2d: kernel and stride must be >= 1");
  const Shape& xs = x.shape();
  require(kernel <= xs[2] + 2 * pad && kernel <= xs[3] + 2 * pad,
          "maxpool2d: window " + std::to_string(kernel) + " larger than padded input " + shape_string(xs));
  const std::size_t t = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::size_t ho = conv_out_size(h, kernel, stride, pad), wo = conv_out_size(w, kernel, stride, pad);
  Tensor<S> out(Shape{t, c, ho, wo});
  std::vector<std::size_t> argmax(out.size());
  const S* xv = x.value().data();
  std::size_t o = 0;
  for (std::size_t f = 0; f < t; ++f) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (f * c + ch) * h * w;
      for (std::size_t oh = 0; oh < ho; ++oh) {
        for (std::size_t ow = 0; ow < wo; ++ow, ++o) {
          S best = -std::numeric_limits<S>::infinity();
          std::size_t best_i = base;
          bool found = false;
          for (std::size_t a = 0; a < kernel; ++a) {
            const long ih = static_cast<long>(oh * stride + a) - static_cast<long>(pad);
            if (ih < 0 || ih >= static_cast<long>(h)) continue;
            for (std::size_t b = 0; b < kernel; ++b) {
              const long iw = static_cast<long>(ow * stride + b) - static_cast<long>(pad);
              if (iw < 0 || iw >= static_cast<long>(w)) continue;
              const std::size_t idx = base + static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw);
              if (!found || xv[idx] > best) {
                best = xv[idx];
                best_i = idx;
                found = true;
              }
            }
          }
          out[o] = best;
          argmax[o] = best_i;
        }
      }
    }
  }
  return make_result<S>(std::move(out), {x}, [argmax = std::move(argmax)](Node<S>& self) {
    if (Tensor<S>* dx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < argmax.size(); ++i) (*dx)[argmax[i]] += self.grad[i];
    }
  });
}

template <class S>
Var<S> maxpool1d_temporal(const Var<S>& x, std::size_t kernel, std::size_t stride) {
  require_rank(x, 4, "maxpool1d_temporal");
  require(stride >= 1 && kernel >= 1, "maxpool1d_temporal: kernel and stride must be >= 1");
  const Shape& xs = x.shape();
  require(kernel <= xs[0], "maxpool1d_temporal: window " + std::to_string(kernel) + " longer than " +
                               std::to_string(xs[0]) + " frames");
  const std::size_t frame = xs[1] * xs[2] * xs[3];
  const std::size_t to = (xs[0] - kernel) / stride + 1;
  Tensor<S> out(Shape{to, xs[1], xs[2], xs[3]});
  std::vector<std::size_t> argmax(out.size());
  const S* xv = x.value().data();
  for (std::size_t ot = 0; ot < to; ++ot) {
    for (std::size_t i = 0; i < frame; ++i) {
      std::size_t best = (ot * stride) * frame + i;
      for (std::size_t a = 1; a < kernel; ++a) {
        const std::size_t idx = (ot * stride + a) * frame + i;
        if (xv[idx] > xv[best]) best = idx;
      }
      out[ot * frame + i] = xv[best];
      argmax[ot * frame + i] = best;
    }
  }
  return make_result<S>(std::move(out), {x}, [argmax = std::move(argmax)](Node<S>& self) {
    if (Tensor<S>* dx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < argmax.size(); ++i) (*dx)[argmax[i]] += self.grad[i];
    }
  });
}

template <class S>
Var<S> global_avgpool_spatial(const Var<S>& x) {
  require_rank(x, 4, "global_avgpool_spatial");
  const Shape& xs = x.shape();
  const std::size_t t = xs[0], c = xs[1], plane = xs[2] * xs[3];
  require(plane > 0, "global_avgpool_spatial: empty spatial extent");
  Tensor<S> out(Shape{t, c});
  const S* xv = x.value().data();
  for (std::size_t i = 0; i < t * c; ++i) {
    S acc{0};
    for (std::size_t p = 0; p < plane; ++p) acc += xv[i * plane + p];
    out[i] = acc / static_cast<S>(plane);
  }
  return make_result<S>(std::move(out), {x}, [plane, t, c](Node<S>& self) {
    if (Tensor<S>* dx = parent_grad(self, 0)) {
      const S inv = S{1} / static_cast<S>(plane);
      for (std::size_t i = 0; i < t * c; ++i) {
        const S g = self.grad[i] * inv;
        for (std::size_t p = 0; p < plane; ++p) (*dx)[i * plane + p] += g;
      }
    }
  });
}

template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t t = x.shape()[0], cin = x.shape()[1], v = w.shape()[0];
  require(w.shape()[1] == cin, "linear: input width " + std::to_string(cin) + " does not match weight " +
                                   shape_string(w.shape()));
  require(b.defined() && b.value().size() == v, "linear: bias must have " + std::to_string(v) + " entries");
  Tensor<S> out(Shape{t, v});
  for (std::size_t r = 0; r < t; ++r) std::copy_n(b.value().data(), v, out.data() + r * v);
  kernels::gemm<S>(false, true, t, v, cin, S{1}, x.value().data(), cin, w.value().data(), cin, S{1}, out.data(), v);
  return make_result<S>(std::move(out), {x, w, b}, [t, cin, v](Node<S>& self) {
    const S* dy = self.grad.data();
    if (Tensor<S>* dx = parent_grad(self, 0)) {
      kernels::gemm<S>(false, false, t, cin, v, S{1}, dy, v, self.parents[1]->value.data(), cin, S{1}, dx->data(),
                       cin);
    }
    if (Tensor<S>* dw = parent_grad(self, 1)) {
      kernels::gemm<S>(true, false, v, cin, t, S{1}, dy, v, self.parents[0]->value.data(), cin, S{1}, dw->data(),
                       cin);
    }
    if (Tensor<S>* db = parent_grad(self, 2)) {
      for (std::size_t r = 0; r < t; ++r) kernels::axpy(v, S{1}, dy + r * v, db->data());
    }
  });
}

template <class S>
Var<S> log_softmax(const Var<S>& x) {
  require_rank(x, 2, "log_softmax");
  const std::size_t t = x.shape()[0], v = x.shape()[1];
  require(v > 0, "log_softmax: empty class axis");
  Tensor<S> out(x.shape());
  const S* xv = x.value().data();
  for (std::size_t r = 0; r < t; ++r) {
    const S* row = xv + r * v;
    const S mx = *std::max_element(row, row + v);
    S acc{0};
    for (std::size_t k = 0; k < v; ++k) acc += std::exp(row[k] - mx);
    const S lse = mx + std::log(acc);
    for (std::size_t k = 0; k < v; ++k) out[r * v + k] = row[k] - lse;
  }
  debug_check("log_softmax", out);
  return make_result<S>(std::move(out), {x}, [t, v](Node<S>& self) {
    if (Tensor<S>* dx = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < t; ++r) {
        S gsum{0};
        for (std::size_t k = 0; k < v; ++k) gsum += self.grad[r * v + k];
        for (std::size_t k = 0; k < v; ++k) {
          (*dx)[r * v + k] += self.grad[r * v + k] - std::exp(self.value[r * v + k]) * gsum;
        }
      }
    }
  });
}

#define TSCM_INSTANTIATE_OPS(S)                                                                              \
  template Var<S> conv3d(const Var<S>&, const Var<S>&, const ConvParams&);                                   \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, std::size_t, std::size_t);                            \
  template Var<S> conv1d_temporal(const Var<S>&, const Var<S>&, std::size_t, std::size_t);                   \
  template Tensor<S> conv3d_forward(const Tensor<S>&, const Tensor<S>&, const KernelDims&, const ConvParams&); \
  template Var<S> relu(const Var<S>&);                                                                        \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                          \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                                          \
  template Var<S> scale(const Var<S>&, S);                                                                    \
  template Var<S> sum(const Var<S>&);                                                                         \
  template Var<S> detach(const Var<S>&);                                                                      \
  template Var<S> channel_norm(const Var<S>&, const Var<S>&, const Var<S>&, NormState<S>&, bool);             \
  template Var<S> maxpool2d(const Var<S>&, std::size_t, std::size_t, std::size_t);                            \
  template Var<S> maxpool1d_temporal(const Var<S>&, std::size_t, std::size_t);                                \
  template Var<S> global_avgpool_spatial(const Var<S>&);                                                      \
  template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                                        \
  template Var<S> log_softmax(const Var<S>&);

TSCM_INSTANTIATE_OPS(float)
TSCM_INSTANTIATE_OPS(double)
#undef TSCM_INSTANTIATE_OPS

}  // namespace tscm::ops

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "skipcross/tensor.hpp"

namespace skipcross {

namespace detail {

// Smallest output index o with o*stride + k - pad >= 0.
inline int conv_lo(int k, int pad, int stride) {
  const int num = pad - k;
  return num <= 0 ? 0 : (num + stride - 1) / stride;
}

// Largest output index o with o*stride + k - pad <= in_extent - 1, capped.
inline int conv_hi(int k, int pad, int stride, int in_extent, int cap) {
  const int num = in_extent - 1 + pad - k;
  if (num < 0) return -1;
  return std::min(cap - 1, num / stride);
}

inline void require_rank(int got, int want, const char* op) {
  if (got != want) {
    throw ShapeError(std::string(op) + ": expected rank-" +
                     std::to_string(want) + " tensor, got rank-" +
                     std::to_string(got));
  }
}

}  // namespace detail

// 2-d cross-correlation. input [N,Cin,H,W], weight [Cout,Cin,kh,kw],
// optional bias [Cout]. Output extent = floor((H + 2*pad - kh)/stride) + 1.
template <typename S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& weight,
                  const TensorT<S>& bias, int stride = 1, int pad = 0) {
  detail::require_rank(input.rank(), 4, "conv2d input");
  detail::require_rank(weight.rank(), 4, "conv2d weight");
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: bad stride/pad");
  const int N = input.extent(0), Cin = input.extent(1);
  const int H = input.extent(2), W = input.extent(3);
  const int Cout = weight.extent(0), kh = weight.extent(2),
            kw = weight.extent(3);
  if (weight.extent(1) != Cin) {
    throw ShapeError("conv2d: weight expects " +
                     std::to_string(weight.extent(1)) + " input channels, got " +
                     std::to_string(Cin));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != Cout)) {
    throw ShapeError("conv2d: bias shape must be [" + std::to_string(Cout) +
                     "]");
  }
  const int Hout = (H + 2 * pad - kh) / stride + 1;
  const int Wout = (W + 2 * pad - kw) / stride + 1;
  if (H + 2 * pad < kh || W + 2 * pad < kw) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " larger than padded input " +
                     std::to_string(H + 2 * pad) + "x" +
                     std::to_string(W + 2 * pad));
  }

  TensorT<S> out = TensorT<S>::zeros({N, Cout, Hout, Wout});
  const S* in = input.data();
  const S* wt = weight.data();
  S* po = out.data();
  const int64_t in_plane = static_cast<int64_t>(H) * W;
  const int64_t out_plane = static_cast<int64_t>(Hout) * Wout;

  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Cout; ++co) {
      S* oplane = po + (static_cast<int64_t>(n) * Cout + co) * out_plane;
      if (bias.defined()) {
        const S bv = bias.data()[co];
        for (int64_t i = 0; i < out_plane; ++i) oplane[i] = bv;
      }
      for (int ci = 0; ci < Cin; ++ci) {
        const S* iplane = in + (static_cast<int64_t>(n) * Cin + ci) * in_plane;
        const S* wk =
            wt + (static_cast<int64_t>(co) * Cin + ci) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const int oy_lo = detail::conv_lo(ky, pad, stride);
          const int oy_hi = detail::conv_hi(ky, pad, stride, H, Hout);
          for (int kx = 0; kx < kw; ++kx) {
            const S wv = wk[ky * kw + kx];
            if (wv == S(0)) continue;
            const int ox_lo = detail::conv_lo(kx, pad, stride);
            const int ox_hi = detail::conv_hi(kx, pad, stride, W, Wout);
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const S* irow = iplane +
                              static_cast<int64_t>(oy * stride + ky - pad) * W +
                              kx - pad;
              S* orow = oplane + static_cast<int64_t>(oy) * Wout;
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                orow[ox] += wv * irow[static_cast<int64_t>(ox) * stride];
              }
            }
          }
        }
      }
    }
  }

  if (detail::track<S>({&input, &weight, &bias})) {
    out.set_requires_grad(true);
    TensorT<S> ic = input, wc = weight, bc = bias, oc = out;
    Tape<S>::current()->record(out, [ic, wc, bc, oc, stride, pad]() mutable {
      const int N = ic.extent(0), Cin = ic.extent(1);
      const int H = ic.extent(2), W = ic.extent(3);
      const int Cout = wc.extent(0), kh = wc.extent(2), kw = wc.extent(3);
      const int Hout = oc.extent(2), Wout = oc.extent(3);
      const int64_t in_plane = static_cast<int64_t>(H) * W;
      const int64_t out_plane = static_cast<int64_t>(Hout) * Wout;
      std::span<const S> g = oc.grad();
      const bool need_in = ic.requires_grad();
      const bool need_w = wc.requires_grad();
      for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Cout; ++co) {
          const S* gplane =
              g.data() + (static_cast<int64_t>(n) * Cout + co) * out_plane;
          for (int ci = 0; ci < Cin; ++ci) {
            const S* iplane =
                ic.data() + (static_cast<int64_t>(n) * Cin + ci) * in_plane;
            S* giplane =
                need_in
                    ? ic.grad().data() +
                          (static_cast<int64_t>(n) * Cin + ci) * in_plane
                    : nullptr;
            const int64_t wbase =
                (static_cast<int64_t>(co) * Cin + ci) * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
              const int oy_lo = detail::conv_lo(ky, pad, stride);
              const int oy_hi = detail::conv_hi(ky, pad, stride, H, Hout);
              for (int kx = 0; kx < kw; ++kx) {
                const int ox_lo = detail::conv_lo(kx, pad, stride);
                const int ox_hi = detail::conv_hi(kx, pad, stride, W, Wout);
                const S wv = wc.data()[wbase + ky * kw + kx];
                S wacc = S(0);
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  const int64_t irow0 =
                      static_cast<int64_t>(oy * stride + ky - pad) * W + kx -
                      pad;
                  const S* grow = gplane + static_cast<int64_t>(oy) * Wout;
                  if (need_w) {
                    const S* irow = iplane + irow0;
                    for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                      wacc += grow[ox] * irow[static_cast<int64_t>(ox) * stride];
                    }
                  }
                  if (need_in) {
                    S* girow = giplane + irow0;
                    for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                      girow[static_cast<int64_t>(ox) * stride] += wv * grow[ox];
                    }
                  }
                }
                if (need_w) wc.grad()[wbase + ky * kw + kx] += wacc;
              }
            }
          }
          if (bc.defined() && bc.requires_grad()) {
            S acc = S(0);
            for (int64_t i = 0; i < out_plane; ++i) acc += gplane[i];
            bc.grad()[co] += acc;
          }
        }
      }
    });
  }
  return out;
}

// Transposed 2-d convolution (scatter form). input [N,Cin,H,W],
// weight [Cin,Cout,kh,kw], optional bias [Cout]. Output extent
// = (H - 1)*stride - 2*pad + kh.
template <typename S>
TensorT<S> transposed_conv2d(const TensorT<S>& input, const TensorT<S>& weight,
                             const TensorT<S>& bias, int stride = 1,
                             int pad = 0) {
  detail::require_rank(input.rank(), 4, "transposed_conv2d input");
  detail::require_rank(weight.rank(), 4, "transposed_conv2d weight");
  if (stride < 1 || pad < 0) {
    throw ShapeError("transposed_conv2d: bad stride/pad");
  }
  const int N = input.extent(0), Cin = input.extent(1);
  const int H = input.extent(2), W = input.extent(3);
  const int Cout = weight.extent(1), kh = weight.extent(2),
            kw = weight.extent(3);
  if (weight.extent(0) != Cin) {
    throw ShapeError("transposed_conv2d: weight expects " +
                     std::to_string(weight.extent(0)) +
                     " input channels, got " + std::to_string(Cin));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != Cout)) {
    throw ShapeError("transposed_conv2d: bias shape must be [" +
                     std::to_string(Cout) + "]");
  }
  const int Hout = (H - 1) * stride - 2 * pad + kh;
  const int Wout = (W - 1) * stride - 2 * pad + kw;
  if (Hout < 1 || Wout < 1) {
    throw ShapeError("transposed_conv2d: output extent " +
                     std::to_string(Hout) + "x" + std::to_string(Wout) +
                     " is empty");
  }

  TensorT<S> out = TensorT<S>::zeros({N, Cout, Hout, Wout});
  const S* in = input.data();
  const S* wt = weight.data();
  S* po = out.data();
  const int64_t in_plane = static_cast<int64_t>(H) * W;
  const int64_t out_plane = static_cast<int64_t>(Hout) * Wout;

  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Cout; ++co) {
      S* oplane = po + (static_cast<int64_t>(n) * Cout + co) * out_plane;
      if (bias.defined()) {
        const S bv = bias.data()[co];
        for (int64_t i = 0; i < out_plane; ++i) oplane[i] = bv;
      }
      for (int ci = 0; ci < Cin; ++ci) {
        const S* iplane = in + (static_cast<int64_t>(n) * Cin + ci) * in_plane;
        const S* wk =
            wt + (static_cast<int64_t>(ci) * Cout + co) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy_lo = detail::conv_lo(ky, pad, stride);
          const int iy_hi = detail::conv_hi(ky, pad, stride, Hout, H);
          for (int kx = 0; kx < kw; ++kx) {
            const S wv = wk[ky * kw + kx];
            if (wv == S(0)) continue;
            const int ix_lo = detail::conv_lo(kx, pad, stride);
            const int ix_hi = detail::conv_hi(kx, pad, stride, Wout, W);
            for (int iy = iy_lo; iy <= iy_hi; ++iy) {
              const S* irow = iplane + static_cast<int64_t>(iy) * W;
              S* orow = oplane +
                        static_cast<int64_t>(iy * stride + ky - pad) * Wout +
                        kx - pad;
              for (int ix = ix_lo; ix <= ix_hi; ++ix) {
                orow[static_cast<int64_t>(ix) * stride] += wv * irow[ix];
              }
            }
          }
        }
      }
    }
  }

  if (detail::track<S>({&input, &weight, &bias})) {
    out.set_requires_grad(true);
    TensorT<S> ic = input, wc = weight, bc = bias, oc = out;
    Tape<S>::current()->record(out, [ic, wc, bc, oc, stride, pad]() mutable {
      const int N = ic.extent(0), Cin = ic.extent(1);
      const int H = ic.extent(2), W = ic.extent(3);
      const int Cout = wc.extent(1), kh = wc.extent(2), kw = wc.extent(3);
      const int Hout = oc.extent(2), Wout = oc.extent(3);
      const int64_t in_plane = static_cast<int64_t>(H) * W;
      const int64_t out_plane = static_cast<int64_t>(Hout) * Wout;
      std::span<const S> g = oc.grad();
      const bool need_in = ic.requires_grad();
      const bool need_w = wc.requires_grad();
      for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Cout; ++co) {
          const S* gplane =
              g.data() + (static_cast<int64_t>(n) * Cout + co) * out_plane;
          for (int ci = 0; ci < Cin; ++ci) {
            const S* iplane =
                ic.data() + (static_cast<int64_t>(n) * Cin + ci) * in_plane;
            S* giplane =
                need_in
                    ? ic.grad().data() +
                          (static_cast<int64_t>(n) * Cin + ci) * in_plane
                    : nullptr;
            const int64_t wbase =
                (static_cast<int64_t>(ci) * Cout + co) * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy_lo = detail::conv_lo(ky, pad, stride);
              const int iy_hi = detail::conv_hi(ky, pad, stride, Hout, H);
              for (int kx = 0; kx < kw; ++kx) {
                const int ix_lo = detail::conv_lo(kx, pad, stride);
                const int ix_hi = detail::conv_hi(kx, pad, stride, Wout, W);
                const S wv = wc.data()[wbase + ky * kw + kx];
                S wacc = S(0);
                for (int iy = iy_lo; iy <= iy_hi; ++iy) {
                  const S* grow =
                      gplane +
                      static_cast<int64_t>(iy * stride + ky - pad) * Wout + kx -
                      pad;
                  if (need_w) {
                    const S* irow = iplane + static_cast<int64_t>(iy) * W;
                    for (int ix = ix_lo; ix <= ix_hi; ++ix) {
                      wacc += irow[ix] * grow[static_cast<int64_t>(ix) * stride];
                    }
                  }
                  if (need_in) {
                    S* girow = giplane + static_cast<int64_t>(iy) * W;
                    for (int ix = ix_lo; ix <= ix_hi; ++ix) {
                      girow[ix] += wv * grow[static_cast<int64_t>(ix) * stride];
                    }
                  }
                }
                if (need_w) wc.grad()[wbase + ky * kw + kx] += wacc;
              }
            }
          }
          if (bc.defined() && bc.requires_grad()) {
            S acc = S(0);
            for (int64_t i = 0; i < out_plane; ++i) acc += gplane[i];
            bc.grad()[co] += acc;
          }
        }
      }
    });
  }
  return out;
}

// 2x2 max pooling with stride 2; odd spatial extents are rejected. Ties pick
// the first maximum in row-major window order.
template <typename S>
TensorT<S> maxpool2d(const TensorT<S>& input) {
  detail::require_rank(input.rank(), 4, "maxpool2d input");
  const int N = input.extent(0), C = input.extent(1);
  const int H = input.extent(2), W = input.extent(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("maxpool2d: spatial extents must be even, got " +
                     std::to_string(H) + "x" + std::to_string(W));
  }
  const int Hout = H / 2, Wout = W / 2;
  TensorT<S> out = TensorT<S>::zeros({N, C, Hout, Wout});
  std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
  const S* in = input.data();
  S* po = out.data();
  int64_t o = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const int64_t base = (static_cast<int64_t>(n) * C + c) *
                           static_cast<int64_t>(H) * W;
      for (int oy = 0; oy < Hout; ++oy) {
        for (int ox = 0; ox < Wout; ++ox, ++o) {
          int64_t best = base + static_cast<int64_t>(2 * oy) * W + 2 * ox;
          S bv = in[best];
          const int64_t cands[3] = {best + 1, best + W, best + W + 1};
          for (int64_t cidx : cands) {
            if (in[cidx] > bv) {
              bv = in[cidx];
              best = cidx;
            }
          }
          po[o] = bv;
          argmax[static_cast<size_t>(o)] = best;
        }
      }
    }
  }
  if (detail::track<S>({&input})) {
    out.set_requires_grad(true);
    TensorT<S> ic = input, oc = out;
    Tape<S>::current()->record(
        out, [ic, oc, argmax = std::move(argmax)]() mutable {
          if (!ic.requires_grad()) return;
          std::span<const S> g = oc.grad();
          std::span<S> gi = ic.grad();
          for (size_t i = 0; i < argmax.size(); ++i) {
            gi[static_cast<size_t>(argmax[i])] += g[i];
          }
        });
  }
  return out;
}

// Per-pixel softmax cross entropy, averaged over batch and spatial positions.
// logits [N,C,H,W]; labels holds N*H*W class indices in row-major order.
template <typename S>
TensorT<S> softmax_cross_entropy(const TensorT<S>& logits,
                                 const std::vector<int>& labels) {
  detail::require_rank(logits.rank(), 4, "softmax_cross_entropy logits");
  const int N = logits.extent(0), C = logits.extent(1);
  const int H = logits.extent(2), W = logits.extent(3);
  const int64_t pixels = static_cast<int64_t>(N) * H * W;
  if (static_cast<int64_t>(labels.size()) != pixels) {
    throw ShapeError("softmax_cross_entropy: expected " +
                     std::to_string(pixels) + " labels, got " +
                     std::to_string(labels.size()));
  }
  const S* in = logits.data();
  const int64_t plane = static_cast<int64_t>(H) * W;
  // probs stored for the adjoint; same layout as logits
  std::vector<S> probs(static_cast<size_t>(logits.numel()));
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const int64_t nbase = static_cast<int64_t>(n) * C * plane;
    for (int64_t p = 0; p < plane; ++p) {
      const int label = labels[static_cast<size_t>(n * plane + p)];
      if (label < 0 || label >= C) {
        throw DataError("softmax_cross_entropy: label " +
                        std::to_string(label) + " outside [0, " +
                        std::to_string(C) + ")");
      }
      S mx = in[nbase + p];
      for (int c = 1; c < C; ++c) mx = std::max(mx, in[nbase + c * plane + p]);
      double sum = 0.0;
      for (int c = 0; c < C; ++c) {
        const double e = std::exp(static_cast<double>(in[nbase + c * plane + p] - mx));
        probs[static_cast<size_t>(nbase + c * plane + p)] = static_cast<S>(e);
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (int c = 0; c < C; ++c) {
        probs[static_cast<size_t>(nbase + c * plane + p)] =
            static_cast<S>(probs[static_cast<size_t>(nbase + c * plane + p)] * inv);
      }
      total += std::log(sum) -
               static_cast<double>(in[nbase + label * plane + p] - mx);
    }
  }
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(total / pixels));
  if (detail::track<S>({&logits})) {
    out.set_requires_grad(true);
    TensorT<S> lc = logits, oc = out;
    Tape<S>::current()->record(
        out, [lc, oc, labels, probs = std::move(probs), pixels]() mutable {
          if (!lc.requires_grad()) return;
          const S g = oc.grad()[0];
          const S scale = g / static_cast<S>(pixels);
          std::span<S> gl = lc.grad();
          const int N = lc.extent(0), C = lc.extent(1);
          const int64_t plane =
              static_cast<int64_t>(lc.extent(2)) * lc.extent(3);
          for (int n = 0; n < N; ++n) {
            const int64_t nbase = static_cast<int64_t>(n) * C * plane;
            for (int64_t p = 0; p < plane; ++p) {
              const int label = labels[static_cast<size_t>(n * plane + p)];
              for (int c = 0; c < C; ++c) {
                const int64_t idx = nbase + c * plane + p;
                S delta = probs[static_cast<size_t>(idx)];
                if (c == label) delta -= S(1);
                gl[static_cast<size_t>(idx)] += scale * delta;
              }
            }
          }
        });
  }
  return out;
}

// Softmax over the channel axis, forward only (prediction confidence maps).
template <typename S>
TensorT<S> softmax_channels(const TensorT<S>& logits) {
  detail::require_rank(logits.rank(), 4, "softmax_channels logits");
  const int N = logits.extent(0), C = logits.extent(1);
  const int64_t plane =
      static_cast<int64_t>(logits.extent(2)) * logits.extent(3);
  TensorT<S> out = TensorT<S>::zeros(logits.shape());
  const S* in = logits.data();
  S* po = out.data();
  for (int n = 0; n < N; ++n) {
    const int64_t nbase = static_cast<int64_t>(n) * C * plane;
    for (int64_t p = 0; p < plane; ++p) {
      S mx = in[nbase + p];
      for (int c = 1; c < C; ++c) mx = std::max(mx, in[nbase + c * plane + p]);
      double sum = 0.0;
      for (int c = 0; c < C; ++c) {
        const double e =
            std::exp(static_cast<double>(in[nbase + c * plane + p] - mx));
        po[nbase + c * plane + p] = static_cast<S>(e);
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (int c = 0; c < C; ++c) {
        po[nbase + c * plane + p] =
            static_cast<S>(po[nbase + c * plane + p] * inv);
      }
    }
  }
  return out;
}

// Dot product with a same-shaped tensor, as a rank-0 tensor. Handy for
// seeding backward passes with an arbitrary upstream gradient.
template <typename S>
TensorT<S> weighted_sum(const TensorT<S>& x, const TensorT<S>& coeff) {
  detail::require_same_shape(x, coeff, "weighted_sum");
  double acc = 0.0;
  const S* px = x.data();
  const S* pc = coeff.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    acc += static_cast<double>(px[i]) * static_cast<double>(pc[i]);
  }
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc));
  if (detail::track<S>({&x, &coeff})) {
    out.set_requires_grad(true);
    TensorT<S> xc = x, cc = coeff, oc = out;
    Tape<S>::current()->record(out, [xc, cc, oc]() mutable {
      const S g = oc.grad()[0];
      if (xc.requires_grad()) {
        std::span<S> gx = xc.grad();
        const S* pc2 = cc.data();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g * pc2[i];
      }
      if (cc.requires_grad()) {
        std::span<S> gc = cc.grad();
        const S* px2 = xc.data();
        for (size_t i = 0; i < gc.size(); ++i) gc[i] += g * px2[i];
      }
    });
  }
  return out;
}

// Sum of all elements as a rank-0 tensor.
template <typename S>
TensorT<S> sum_all(const TensorT<S>& x) {
  double acc = 0.0;
  for (S v : x.values()) acc += static_cast<double>(v);
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc));
  if (detail::track<S>({&x})) {
    out.set_requires_grad(true);
    TensorT<S> xc = x, oc = out;
    Tape<S>::current()->record(out, [xc, oc]() mutable {
      if (!xc.requires_grad()) return;
      const S g = oc.grad()[0];
      for (S& v : xc.grad()) v += g;
    });
  }
  return out;
}

}  // namespace skipcross

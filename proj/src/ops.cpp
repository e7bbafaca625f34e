/*
 * Copyright 2026 The mfuse Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "linalg.hpp"
#include "mfuse/error.hpp"
#include "mfuse/random.hpp"

namespace mfuse::ops {

namespace {

[[noreturn]] void shape_error(std::string_view op, const std::string& detail) {
  fail(ErrorKind::kInvalidArgument,
       "primitive '" + std::string(op) + "': " + detail);
}

void require_rank(std::string_view op, const char* what, const Shape& s,
                  std::size_t rank) {
  if (s.size() != rank) {
    shape_error(op, std::string(what) + " must have rank " +
                        std::to_string(rank) + ", got " + shape_str(s));
  }
}

void require_same(std::string_view op, const Shape& a, const Shape& b) {
  if (a != b) {
    shape_error(op, "operand shapes differ: " + shape_str(a) + " vs " + shape_str(b));
  }
}

void accumulate(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

// Product of extents before / after `axis`.
std::size_t outer_size(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < axis; ++i) n *= s[i];
  return n;
}

std::size_t inner_size(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) n *= s[i];
  return n;
}

template <typename Fwd, typename Deriv>
Var unary(std::string_view op, Var x, Fwd fwd, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const Tensor* xp = &xv;
  Var ins[] = {x};
  return x.graph().record(
      op, ins, std::move(out),
      [xp, deriv](const Tensor& y, const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        double* dx = grads[0]->data();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * deriv((*xp)[i], y[i]);
      });
}

}  // namespace

Var matmul(Var a, Var b) {
  constexpr std::string_view op = "matmul";
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require_rank(op, "left operand", sa, 2);
  require_rank(op, "right operand", sb, 2);
  if (sa[1] != sb[0]) {
    shape_error(op, "inner dimensions differ: " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor out({m, n});
  linalg::gemm(false, false, m, n, k, 1.0, a.value().data(), k, b.value().data(), n,
               0.0, out.data(), n);
  const Tensor* av = &a.value();
  const Tensor* bv = &b.value();
  Var ins[] = {a, b};
  return a.graph().record(
      op, ins, std::move(out),
      [av, bv, m, n, k](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (grads[0]) {
          linalg::gemm(false, true, m, k, n, 1.0, g.data(), n, bv->data(), n, 1.0,
                       grads[0]->data(), k);
        }
        if (grads[1]) {
          linalg::gemm(true, false, k, n, m, 1.0, av->data(), k, g.data(), n, 1.0,
                       grads[1]->data(), n);
        }
      });
}

Var add_bias(Var x, Var bias) {
  constexpr std::string_view op = "add_bias";
  const Shape& sx = x.shape();
  const Shape& sb = bias.shape();
  require_rank(op, "bias", sb, 1);
  if (sx.empty() || sx.back() != sb[0]) {
    shape_error(op, "last axis of " + shape_str(sx) + " does not match bias " +
                        shape_str(sb));
  }
  const std::size_t n = sb[0];
  const std::size_t rows = x.value().size() / n;
  Tensor out = x.value();
  const double* b = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += b[j];
  }
  Var ins[] = {x, bias};
  return x.graph().record(
      op, ins, std::move(out),
      [rows, n](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (grads[0]) accumulate(*grads[0], g);
        if (grads[1]) {
          double* db = grads[1]->data();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* row = g.data() + r * n;
            for (std::size_t j = 0; j < n; ++j) db[j] += row[j];
          }
        }
      });
}

Var add(Var a, Var b) {
  require_same("add", a.shape(), b.shape());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Var ins[] = {a, b};
  return a.graph().record(
      "add", ins, std::move(out),
      [](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (grads[0]) accumulate(*grads[0], g);
        if (grads[1]) accumulate(*grads[1], g);
      });
}

Var mul(Var a, Var b) {
  require_same("mul", a.shape(), b.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const Tensor* ap = &av;
  const Tensor* bp = &bv;
  Var ins[] = {a, b};
  return a.graph().record(
      "mul", ins, std::move(out),
      [ap, bp](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (grads[0]) {
          double* d = grads[0]->data();
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (*bp)[i];
        }
        if (grads[1]) {
          double* d = grads[1]->data();
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (*ap)[i];
        }
      });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  Var ins[] = {x};
  return x.graph().record(
      "scale", ins, std::move(out),
      [factor](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        double* d = grads[0]->data();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
      });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  Var ins[] = {x};
  return x.graph().record(
      "sum", ins, Tensor::scalar(total),
      [](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        const double gv = g[0];
        for (double& d : grads[0]->values()) d += gv;
      });
}

Var relu(Var x) {
  x.graph().note_kinks(x.value());
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  constexpr std::string_view op = "concat";
  if (parts.empty()) shape_error(op, "needs at least one input");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    shape_error(op, "axis " + std::to_string(axis) + " out of range for " +
                        shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) ok = false;
    }
    if (!ok) {
      shape_error(op, "shapes " + shape_str(first) + " and " + shape_str(s) +
                          " differ off axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = outer_size(first, axis);
  const std::size_t inner = inner_size(first, axis);
  const std::size_t out_chunk = out_shape[axis] * inner;
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t chunk = p.shape()[axis] * inner;
    const double* src = p.value().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * chunk, chunk, out.data() + o * out_chunk + offset);
    }
    offsets.push_back(offset);
    offset += chunk;
  }
  return parts[0].graph().record(
      op, parts, std::move(out),
      [outer, out_chunk, offsets](const Tensor&, const Tensor& g,
                                  std::span<Tensor* const> grads) {
        for (std::size_t p = 0; p < grads.size(); ++p) {
          if (!grads[p]) continue;
          const std::size_t chunk = grads[p]->size() / outer;
          double* dst = grads[p]->data();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = g.data() + o * out_chunk + offsets[p];
            for (std::size_t i = 0; i < chunk; ++i) dst[o * chunk + i] += src[i];
          }
        }
      });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  constexpr std::string_view op = "slice";
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    shape_error(op, "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  if (begin >= end || end > s[axis]) {
    shape_error(op, "range [" + std::to_string(begin) + ", " + std::to_string(end) +
                        ") invalid for extent " + std::to_string(s[axis]));
  }
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const std::size_t outer = outer_size(s, axis);
  const std::size_t inner = inner_size(s, axis);
  const std::size_t in_chunk = s[axis] * inner;
  const std::size_t out_chunk = (end - begin) * inner;
  const std::size_t start = begin * inner;
  Tensor out(out_shape);
  const double* src = x.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src + o * in_chunk + start, out_chunk, out.data() + o * out_chunk);
  }
  Var ins[] = {x};
  return x.graph().record(
      op, ins, std::move(out),
      [outer, in_chunk, out_chunk, start](const Tensor&, const Tensor& g,
                                          std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        double* dst = grads[0]->data();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < out_chunk; ++i) {
            dst[o * in_chunk + start + i] += g[o * out_chunk + i];
          }
        }
      });
}

Var reshape(Var x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    shape_error("reshape", "cannot reshape " + shape_str(x.shape()) + " to " +
                               shape_str(shape));
  }
  Tensor out = x.value().reshaped(std::move(shape));
  Var ins[] = {x};
  return x.graph().record(
      "reshape", ins, std::move(out),
      [](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (grads[0]) accumulate(*grads[0], g);
      });
}

Var row_select(std::span<const std::uint8_t> take_a, Var a, Var b) {
  constexpr std::string_view op = "row_select";
  require_same(op, a.shape(), b.shape());
  if (a.shape().empty() || take_a.size() != a.shape()[0]) {
    shape_error(op, "mask of length " + std::to_string(take_a.size()) +
                        " does not match rows of " + shape_str(a.shape()));
  }
  const std::size_t rows = a.shape()[0];
  const std::size_t width = a.value().size() / rows;
  std::vector<std::uint8_t> mask(take_a.begin(), take_a.end());
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = (mask[r] ? a.value().data() : b.value().data()) + r * width;
    std::copy_n(src, width, out.data() + r * width);
  }
  Var ins[] = {a, b};
  return a.graph().record(
      op, ins, std::move(out),
      [mask, width](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        for (std::size_t r = 0; r < mask.size(); ++r) {
          Tensor* dst = mask[r] ? grads[0] : grads[1];
          if (!dst) continue;
          for (std::size_t i = 0; i < width; ++i) {
            (*dst)[r * width + i] += g[r * width + i];
          }
        }
      });
}

Shape conv2d_output_shape(const Shape& x, const Shape& w, const Conv2dAttrs& attrs) {
  constexpr std::string_view op = "conv2d";
  require_rank(op, "input", x, 4);
  require_rank(op, "kernel", w, 4);
  if (x[3] != w[2]) {
    shape_error(op, "input channels " + std::to_string(x[3]) +
                        " do not match kernel " + shape_str(w));
  }
  if (attrs.stride == 0) shape_error(op, "stride must be positive");
  if (x[1] + 2 * attrs.pad < w[0] || x[2] + 2 * attrs.pad < w[1]) {
    shape_error(op, "kernel " + shape_str(w) + " larger than padded input " +
                        shape_str(x));
  }
  const std::size_t ho = (x[1] + 2 * attrs.pad - w[0]) / attrs.stride + 1;
  const std::size_t wo = (x[2] + 2 * attrs.pad - w[1]) / attrs.stride + 1;
  return {x[0], ho, wo, w[3]};
}

namespace {

// Source pixel index for an output tap, or -1 when it falls in zero padding.
inline long conv_source(long pos, long extent, Padding padding) {
  if (pos >= 0 && pos < extent) return pos;
  if (padding == Padding::kZero) return -1;
  return std::clamp(pos, 0L, extent - 1);
}

}  // namespace

Var conv2d(Var x, Var w, const Conv2dAttrs& attrs) {
  const Shape out_shape = conv2d_output_shape(x.shape(), w.shape(), attrs);
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  const std::size_t n = sx[0], h = sx[1], wd = sx[2], c = sx[3];
  const std::size_t kh = sw[0], kw = sw[1], co = sw[3];
  const std::size_t ho = out_shape[1], wo = out_shape[2];
  const std::size_t rows = n * ho * wo;
  const std::size_t taps = kh * kw * c;
  const long stride = static_cast<long>(attrs.stride);
  const long pad = static_cast<long>(attrs.pad);
  const Padding padding = attrs.padding;

  // im2col: one row per output pixel, columns ordered (ky, kx, channel) to
  // match the kernel's row-major layout.
  auto cols = std::make_shared<std::vector<double>>(rows * taps, 0.0);
  const double* xd = x.value().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double* row = cols->data() + ((b * ho + oy) * wo + ox) * taps;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long iy = conv_source(static_cast<long>(oy) * stride + static_cast<long>(ky) - pad,
                                      static_cast<long>(h), padding);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long ix = conv_source(static_cast<long>(ox) * stride + static_cast<long>(kx) - pad,
                                        static_cast<long>(wd), padding);
            if (iy < 0 || ix < 0) continue;
            const double* src = xd + ((b * h + static_cast<std::size_t>(iy)) * wd +
                                      static_cast<std::size_t>(ix)) * c;
            std::copy_n(src, c, row + (ky * kw + kx) * c);
          }
        }
      }
    }
  }
  Tensor out(out_shape);
  linalg::gemm(false, false, rows, co, taps, 1.0, cols->data(), taps, w.value().data(),
               co, 0.0, out.data(), co);

  const Tensor* wv = &w.value();
  Var ins[] = {x, w};
  return x.graph().record(
      "conv2d", ins, std::move(out),
      [=](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (grads[1]) {
          linalg::gemm(true, false, taps, co, rows, 1.0, cols->data(), taps, g.data(), co,
                       1.0, grads[1]->data(), co);
        }
        if (!grads[0]) return;
        std::vector<double> dcols(rows * taps);
        linalg::gemm(false, true, rows, taps, co, 1.0, g.data(), co, wv->data(), co, 0.0,
                     dcols.data(), taps);
        double* dx = grads[0]->data();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const double* row = dcols.data() + ((b * ho + oy) * wo + ox) * taps;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const long iy = conv_source(
                    static_cast<long>(oy) * stride + static_cast<long>(ky) - pad,
                    static_cast<long>(h), padding);
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const long ix = conv_source(
                      static_cast<long>(ox) * stride + static_cast<long>(kx) - pad,
                      static_cast<long>(wd), padding);
                  if (iy < 0 || ix < 0) continue;
                  double* dst = dx + ((b * h + static_cast<std::size_t>(iy)) * wd +
                                      static_cast<std::size_t>(ix)) * c;
                  const double* src = row + (ky * kw + kx) * c;
                  for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                }
              }
            }
          }
        }
      });
}

Var dynamic_conv1x1(Var map, Var kernels) {
  constexpr std::string_view op = "dynamic_conv1x1";
  const Shape& sm = map.shape();
  const Shape& sk = kernels.shape();
  require_rank(op, "feature map", sm, 4);
  require_rank(op, "kernel bank", sk, 3);
  if (sk[0] != sm[0] || sk[2] != sm[3]) {
    shape_error(op, "kernel bank " + shape_str(sk) + " incompatible with map " +
                        shape_str(sm) + " (need [N,K,D] for map [N,H,W,D])");
  }
  const std::size_t n = sm[0], hw = sm[1] * sm[2], d = sm[3], k = sk[1];
  Tensor out({n, sm[1], sm[2], k});
  const double* md = map.value().data();
  const double* kd = kernels.value().data();
  for (std::size_t b = 0; b < n; ++b) {
    linalg::gemm(false, true, hw, k, d, 1.0, md + b * hw * d, d, kd + b * k * d, d, 0.0,
                 out.data() + b * hw * k, k);
  }
  const Tensor* mv = &map.value();
  const Tensor* kv = &kernels.value();
  Var ins[] = {map, kernels};
  return map.graph().record(
      op, ins, std::move(out),
      [=](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        for (std::size_t b = 0; b < n; ++b) {
          const double* gb = g.data() + b * hw * k;
          if (grads[0]) {
            linalg::gemm(false, false, hw, d, k, 1.0, gb, k, kv->data() + b * k * d, d,
                         1.0, grads[0]->data() + b * hw * d, d);
          }
          if (grads[1]) {
            linalg::gemm(true, false, k, d, hw, 1.0, gb, k, mv->data() + b * hw * d, d,
                         1.0, grads[1]->data() + b * k * d, d);
          }
        }
      });
}

Var avg_pool_spatial(Var x) {
  constexpr std::string_view op = "avg_pool_spatial";
  const Shape& s = x.shape();
  require_rank(op, "input", s, 4);
  const std::size_t n = s[0], hw = s[1] * s[2], c = s[3];
  Tensor out({n, c});
  const double* xd = x.value().data();
  for (std::size_t b = 0; b < n; ++b) {
    double* o = out.data() + b * c;
    for (std::size_t p = 0; p < hw; ++p) {
      const double* src = xd + (b * hw + p) * c;
      for (std::size_t ch = 0; ch < c; ++ch) o[ch] += src[ch];
    }
    for (std::size_t ch = 0; ch < c; ++ch) o[ch] /= static_cast<double>(hw);
  }
  Var ins[] = {x};
  return x.graph().record(
      op, ins, std::move(out),
      [n, hw, c](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        double* dx = grads[0]->data();
        const double inv = 1.0 / static_cast<double>(hw);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t p = 0; p < hw; ++p) {
            double* dst = dx + (b * hw + p) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += g[b * c + ch] * inv;
          }
        }
      });
}

Var tile_spatial(Var v, std::size_t height, std::size_t width) {
  constexpr std::string_view op = "tile_spatial";
  require_rank(op, "input", v.shape(), 2);
  if (height == 0 || width == 0) shape_error(op, "tile extents must be positive");
  const std::size_t n = v.shape()[0], c = v.shape()[1], hw = height * width;
  Tensor out({n, height, width, c});
  const double* vd = v.value().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      std::copy_n(vd + b * c, c, out.data() + (b * hw + p) * c);
    }
  }
  Var ins[] = {v};
  return v.graph().record(
      op, ins, std::move(out),
      [n, hw, c](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        double* dv = grads[0]->data();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t p = 0; p < hw; ++p) {
            const double* src = g.data() + (b * hw + p) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dv[b * c + ch] += src[ch];
          }
        }
      });
}

Var batch_norm(Var x, Var gamma, Var beta, Tensor* running_mean,
               Tensor* running_var, const BatchNormAttrs& attrs) {
  constexpr std::string_view op = "batch_norm";
  const Shape& s = x.shape();
  if (s.empty()) shape_error(op, "input must have rank >= 1");
  const std::size_t c = s.back();
  const std::size_t m = x.value().size() / c;
  const Shape param_shape{c};
  if (gamma.shape() != param_shape || beta.shape() != param_shape) {
    shape_error(op, "scale " + shape_str(gamma.shape()) + " / shift " +
                        shape_str(beta.shape()) + " must be " + shape_str(param_shape));
  }
  for (Tensor* stat : {running_mean, running_var}) {
    if (stat && stat->shape() != param_shape) {
      shape_error(op, "running statistic " + shape_str(stat->shape()) + " must be " +
                          shape_str(param_shape));
    }
  }
  const bool train = x.graph().training();
  if (!train && (!running_mean || !running_var)) {
    shape_error(op, "eval mode requires running statistics");
  }

  const double* xd = x.value().data();
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (train) {
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < c; ++j) mean[j] += xd[r * c + j];
    }
    for (double& v : mean) v /= static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const double dlt = xd[r * c + j] - mean[j];
        var[j] += dlt * dlt;
      }
    }
    for (double& v : var) v /= static_cast<double>(m);
    if (running_mean && running_var) {
      const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
      for (std::size_t j = 0; j < c; ++j) {
        (*running_mean)[j] = attrs.momentum * (*running_mean)[j] + (1.0 - attrs.momentum) * mean[j];
        (*running_var)[j] =
            attrs.momentum * (*running_var)[j] + (1.0 - attrs.momentum) * var[j] * unbias;
      }
    }
  } else {
    std::copy_n(running_mean->data(), c, mean.begin());
    std::copy_n(running_var->data(), c, var.begin());
  }

  auto inv_std = std::make_shared<std::vector<double>>(c);
  for (std::size_t j = 0; j < c; ++j) (*inv_std)[j] = 1.0 / std::sqrt(var[j] + attrs.epsilon);
  auto xhat = std::make_shared<std::vector<double>>(m * c);
  Tensor out(s);
  const double* gd = gamma.value().data();
  const double* bd = beta.value().data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (xd[r * c + j] - mean[j]) * (*inv_std)[j];
      (*xhat)[r * c + j] = xh;
      out[r * c + j] = gd[j] * xh + bd[j];
    }
  }

  const Tensor* gv = &gamma.value();
  Var ins[] = {x, gamma, beta};
  return x.graph().record(
      op, ins, std::move(out),
      [=](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < c; ++j) {
            sum_g[j] += g[r * c + j];
            sum_gx[j] += g[r * c + j] * (*xhat)[r * c + j];
          }
        }
        if (grads[1]) {
          for (std::size_t j = 0; j < c; ++j) (*grads[1])[j] += sum_gx[j];
        }
        if (grads[2]) {
          for (std::size_t j = 0; j < c; ++j) (*grads[2])[j] += sum_g[j];
        }
        if (!grads[0]) return;
        double* dx = grads[0]->data();
        if (train) {
          const double inv_m = 1.0 / static_cast<double>(m);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
              const double k = (*gv)[j] * (*inv_std)[j];
              dx[r * c + j] += k * (g[r * c + j] - inv_m * sum_g[j] -
                                    (*xhat)[r * c + j] * inv_m * sum_gx[j]);
            }
          }
        } else {
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
              dx[r * c + j] += g[r * c + j] * (*gv)[j] * (*inv_std)[j];
            }
          }
        }
      });
}

Var dropout(Var x, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    shape_error("dropout", "rate must be in [0, 1), got " + std::to_string(rate));
  }
  Graph& g = x.graph();
  if (!g.training() || rate == 0.0) return x;
  Rng rng(g.next_stochastic_seed());
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] = x.value()[i] * (*mask)[i];
  }
  Var ins[] = {x};
  return g.record("dropout", ins, std::move(out),
                  [mask](const Tensor&, const Tensor& gr, std::span<Tensor* const> grads) {
                    if (!grads[0]) return;
                    double* d = grads[0]->data();
                    for (std::size_t i = 0; i < gr.size(); ++i) d[i] += gr[i] * (*mask)[i];
                  });
}

Var embedding(Var table, std::span<const std::int64_t> indices) {
  constexpr std::string_view op = "embedding";
  require_rank(op, "table", table.shape(), 2);
  const std::size_t v = table.shape()[0], e = table.shape()[1];
  if (indices.empty()) shape_error(op, "needs at least one index");
  std::vector<std::size_t> idx(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= v) {
      shape_error(op, "index " + std::to_string(indices[i]) + " outside vocabulary of " +
                          std::to_string(v));
    }
    idx[i] = static_cast<std::size_t>(indices[i]);
  }
  Tensor out({idx.size(), e});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(table.value().data() + idx[i] * e, e, out.data() + i * e);
  }
  Var ins[] = {table};
  return table.graph().record(
      op, ins, std::move(out),
      [idx, e](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        double* dt = grads[0]->data();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          for (std::size_t j = 0; j < e; ++j) dt[idx[i] * e + j] += g[i * e + j];
        }
      });
}

Var softmax(Var x) {
  constexpr std::string_view op = "softmax";
  require_rank(op, "input", x.shape(), 2);
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  Tensor out(x.shape());
  const double* xd = x.value().data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xd + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[r * c + j] = std::exp(row[j] - mx);
      z += out[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] /= z;
  }
  Var ins[] = {x};
  return x.graph().record(
      op, ins, std::move(out),
      [n, c](const Tensor& y, const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        double* dx = grads[0]->data();
        for (std::size_t r = 0; r < n; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
          for (std::size_t j = 0; j < c; ++j) {
            dx[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
          }
        }
      });
}

Var weighted_cross_entropy(Var logits, std::span<const std::int64_t> labels,
                           std::span<const double> class_weights) {
  constexpr std::string_view op = "weighted_cross_entropy";
  require_rank(op, "logits", logits.shape(), 2);
  const std::size_t n = logits.shape()[0], c = logits.shape()[1];
  if (labels.size() != n) {
    shape_error(op, std::to_string(labels.size()) + " labels for logits " +
                        shape_str(logits.shape()));
  }
  if (class_weights.size() != c) {
    shape_error(op, std::to_string(class_weights.size()) + " class weights for " +
                        std::to_string(c) + " classes");
  }
  for (std::int64_t y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      shape_error(op, "label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(n * c);
  const double* z = logits.value().data();
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = z + r * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      (*probs)[r * c + j] = std::exp(row[j] - mx);
      total += (*probs)[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] /= total;
    const std::size_t y = static_cast<std::size_t>(labels[r]);
    const double log_p = row[y] - mx - std::log(total);
    loss += class_weights[y] * -log_p;
  }
  loss /= static_cast<double>(n);
  std::vector<std::size_t> ys(labels.begin(), labels.end());
  std::vector<double> w(class_weights.begin(), class_weights.end());
  Var ins[] = {logits};
  return logits.graph().record(
      op, ins, Tensor::scalar(loss),
      [probs, ys, w, n, c](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        double* dz = grads[0]->data();
        const double upstream = g[0] / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
          const double wr = w[ys[r]] * upstream;
          for (std::size_t j = 0; j < c; ++j) {
            const double target = j == ys[r] ? 1.0 : 0.0;
            dz[r * c + j] += wr * ((*probs)[r * c + j] - target);
          }
        }
      });
}

}  // namespace mfuse::ops

#include "semtrack/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "semtrack/error.hpp"
#include "semtrack/simd/kernels.hpp"

namespace semtrack::nn {

LayerParams LayerParams::zeros(Shape weight_shape, Shape bias_shape) {
  LayerParams p;
  p.weights = Tensor(weight_shape);
  p.bias = Tensor(bias_shape);
  p.weight_grad = Tensor(std::move(weight_shape));
  p.bias_grad = Tensor(std::move(bias_shape));
  return p;
}

void LayerParams::zero_grad() {
  weight_grad.fill(0.0);
  bias_grad.fill(0.0);
}

void init_gaussian(LayerParams& p, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& w : p.weights.values()) w = dist(rng);
  p.bias.fill(0.0);
  p.zero_grad();
}

namespace {

struct ImageDims {
  std::size_t n, c, h, w;
};

ImageDims image_dims(const Tensor& t, const char* what) {
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  throw ShapeError(std::string(what) + ": expected C x H x W or N x C x H x W input, got " +
                   to_string(t.shape()));
}

Shape image_shape(bool batched, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  if (batched) return {n, c, h, w};
  return {c, h, w};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": upstream gradient shape " + to_string(b.shape()) +
                     " does not match " + to_string(a.shape()));
  }
}

struct ConvGeometry {
  ImageDims in;
  std::size_t out_c, k, stride, pad, out_h, out_w;
  std::size_t patch() const { return in.c * k * k; }
  std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Tensor& input, const LayerParams& params,
                           std::size_t stride, std::size_t pad) {
  const ImageDims d = image_dims(input, "conv2d");
  const Shape& ws = params.weights.shape();
  if (ws.size() != 4 || ws[2] != ws[3]) {
    throw ShapeError("conv2d: weights must be C' x C x k x k, got " + to_string(ws));
  }
  if (ws[1] != d.c) {
    throw ShapeError("conv2d: weights expect " + std::to_string(ws[1]) +
                     " input channels, input has " + std::to_string(d.c) + " (" +
                     to_string(input.shape()) + ")");
  }
  if (params.bias.shape() != Shape{ws[0]}) {
    throw ShapeError("conv2d: bias shape " + to_string(params.bias.shape()) +
                     " does not match " + std::to_string(ws[0]) + " output channels");
  }
  ConvGeometry g{d, ws[0], ws[2], stride, pad, 0, 0};
  g.out_h = conv_output_extent(d.h, g.k, stride, pad);
  g.out_w = conv_output_extent(d.w, g.k, stride, pad);
  return g;
}

// Patch rows: col[p * patch + (c*k + ky)*k + kx], zero outside the image.
void im2col(const double* img, const ConvGeometry& g, double* col) {
  const std::size_t k = g.k;
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      double* dst = col + (oy * g.out_w + ox) * patch;
      for (std::size_t c = 0; c < g.in.c; ++c) {
        const double* plane = img + c * g.in.h * g.in.w;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          double* row = dst + (c * k + ky) * k;
          if (iy < 0 || iy >= static_cast<long>(g.in.h)) {
            std::fill_n(row, k, 0.0);
            continue;
          }
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            row[kx] = (ix < 0 || ix >= static_cast<long>(g.in.w))
                          ? 0.0
                          : plane[static_cast<std::size_t>(iy) * g.in.w + static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* img) {
  const std::size_t k = g.k;
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const double* src = col + (oy * g.out_w + ox) * patch;
      for (std::size_t c = 0; c < g.in.c; ++c) {
        double* plane = img + c * g.in.h * g.in.w;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.in.h)) continue;
          const double* row = src + (c * k + ky) * k;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.in.w)) continue;
            plane[static_cast<std::size_t>(iy) * g.in.w + static_cast<std::size_t>(ix)] += row[kx];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad) {
  if (stride < 1) throw ShapeError("stride must be >= 1");
  if (kernel < 1) throw ShapeError("kernel must be >= 1");
  if (kernel > in + 2 * pad) {
    throw ShapeError("kernel " + std::to_string(kernel) + " does not fit padded extent " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const LayerParams& params, std::size_t stride,
                      std::size_t pad) {
  const ConvGeometry g = conv_geometry(input, params, stride, pad);
  const auto& kern = simd::active();
  const std::size_t patch = g.patch();
  const std::size_t positions = g.positions();
  Tensor out(image_shape(input.rank() == 4, g.in.n, g.out_c, g.out_h, g.out_w));
  std::vector<double> col(positions * patch);
  std::vector<double> column(g.out_c);
  for (std::size_t n = 0; n < g.in.n; ++n) {
    im2col(input.data() + n * g.in.c * g.in.h * g.in.w, g, col.data());
    double* dst = out.data() + n * g.out_c * positions;
    for (std::size_t p = 0; p < positions; ++p) {
      kern.gemv(params.weights.data(), g.out_c, patch, col.data() + p * patch, patch,
                params.bias.data(), column.data());
      for (std::size_t o = 0; o < g.out_c; ++o) dst[o * positions + p] = column[o];
    }
  }
  return out;
}

Tensor conv2d_backward(const Tensor& input, LayerParams& params, std::size_t stride,
                       std::size_t pad, const Tensor& upstream) {
  const ConvGeometry g = conv_geometry(input, params, stride, pad);
  const Shape expected = image_shape(input.rank() == 4, g.in.n, g.out_c, g.out_h, g.out_w);
  if (upstream.shape() != expected) {
    throw ShapeError("conv2d_backward: upstream gradient shape " + to_string(upstream.shape()) +
                     " does not match forward output " + to_string(expected));
  }
  const auto& kern = simd::active();
  const std::size_t patch = g.patch();
  const std::size_t positions = g.positions();
  Tensor input_grad(input.shape());
  std::vector<double> col(positions * patch);
  std::vector<double> dcol(positions * patch);
  std::vector<double> coeff(g.out_c);
  for (std::size_t n = 0; n < g.in.n; ++n) {
    im2col(input.data() + n * g.in.c * g.in.h * g.in.w, g, col.data());
    const double* gy = upstream.data() + n * g.out_c * positions;
    for (std::size_t o = 0; o < g.out_c; ++o) {
      const double* go = gy + o * positions;
      double bsum = 0.0;
      for (std::size_t p = 0; p < positions; ++p) bsum += go[p];
      params.bias_grad[o] += bsum;
      kern.axpy_rows(go, col.data(), positions, patch, params.weight_grad.data() + o * patch,
                     patch);
    }
    std::fill(dcol.begin(), dcol.end(), 0.0);
    for (std::size_t p = 0; p < positions; ++p) {
      for (std::size_t o = 0; o < g.out_c; ++o) coeff[o] = gy[o * positions + p];
      kern.axpy_rows(coeff.data(), params.weights.data(), g.out_c, patch,
                     dcol.data() + p * patch, patch);
    }
    col2im_add(dcol.data(), g, input_grad.data() + n * g.in.c * g.in.h * g.in.w);
  }
  return input_grad;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  require_same_shape(input, upstream, "relu_backward");
  Tensor out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(input[i] > 0.0)) out[i] = 0.0;
  }
  return out;
}

MaxPoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride) {
  const ImageDims d = image_dims(input, "maxpool");
  const std::size_t oh = conv_output_extent(d.h, window, stride, 0);
  const std::size_t ow = conv_output_extent(d.w, window, stride, 0);
  MaxPoolResult r{Tensor(image_shape(input.rank() == 4, d.n, d.c, oh, ow)), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    const std::size_t base = plane * d.h * d.w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + oy * stride * d.w + ox * stride;
        double best_v = input[best];
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = base + (oy * stride + ky) * d.w + ox * stride + kx;
            if (input[idx] > best_v) {
              best_v = input[idx];
              best = idx;
            }
          }
        }
        r.output[o] = best_v;
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

Tensor maxpool_backward(const Shape& input_shape, std::span<const std::size_t> argmax,
                        const Tensor& upstream) {
  if (argmax.size() != upstream.size()) {
    throw ShapeError("maxpool_backward: upstream gradient has " + std::to_string(upstream.size()) +
                     " elements, forward produced " + std::to_string(argmax.size()));
  }
  Tensor grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= grad.size()) throw ShapeError("maxpool_backward: argmax index out of range");
    grad[argmax[i]] += upstream[i];
  }
  return grad;
}

namespace {
void check_linear(const Tensor& input, const LayerParams& params) {
  const Shape& ws = params.weights.shape();
  if (ws.size() != 2) throw ShapeError("linear: weights must be out x in, got " + to_string(ws));
  if (input.rank() != 2 || input.dim(1) != ws[1]) {
    throw ShapeError("linear: expected N x " + std::to_string(ws[1]) + " input, got " +
                     to_string(input.shape()));
  }
  if (params.bias.shape() != Shape{ws[0]}) {
    throw ShapeError("linear: bias shape " + to_string(params.bias.shape()) + " does not match " +
                     std::to_string(ws[0]) + " outputs");
  }
}
}  // namespace

Tensor linear_forward(const Tensor& input, const LayerParams& params) {
  check_linear(input, params);
  const std::size_t n = input.dim(0);
  const std::size_t in = input.dim(1);
  const std::size_t out_dim = params.weights.dim(0);
  Tensor out({n, out_dim});
  const auto& kern = simd::active();
  for (std::size_t i = 0; i < n; ++i) {
    kern.gemv(params.weights.data(), out_dim, in, input.data() + i * in, in, params.bias.data(),
              out.data() + i * out_dim);
  }
  return out;
}

Tensor linear_backward(const Tensor& input, LayerParams& params, const Tensor& upstream) {
  check_linear(input, params);
  const std::size_t n = input.dim(0);
  const std::size_t in = input.dim(1);
  const std::size_t out_dim = params.weights.dim(0);
  if (upstream.shape() != Shape{n, out_dim}) {
    throw ShapeError("linear_backward: upstream gradient shape " + to_string(upstream.shape()) +
                     " does not match forward output " + to_string(Shape{n, out_dim}));
  }
  const auto& kern = simd::active();
  Tensor input_grad({n, in});
  std::vector<double> coeff(n);
  for (std::size_t o = 0; o < out_dim; ++o) {
    double bsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      coeff[i] = upstream[i * out_dim + o];
      bsum += coeff[i];
    }
    params.bias_grad[o] += bsum;
    kern.axpy_rows(coeff.data(), input.data(), n, in, params.weight_grad.data() + o * in, in);
  }
  for (std::size_t i = 0; i < n; ++i) {
    kern.axpy_rows(upstream.data() + i * out_dim, params.weights.data(), out_dim, in,
                   input_grad.data() + i * in, in);
  }
  return input_grad;
}

DropoutResult dropout_forward(const Tensor& input, double rate, bool train, Rng* rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must lie in [0, 1)");
  if (!train || rate == 0.0) return {input, Tensor()};
  if (rng == nullptr) throw Error("dropout in training mode needs a random stream");
  DropoutResult r{input, Tensor(input.shape())};
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double m = keep(*rng) ? keep_scale : 0.0;
    r.mask[i] = m;
    r.output[i] *= m;
  }
  return r;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& upstream) {
  if (mask.empty()) return upstream;
  require_same_shape(mask, upstream, "dropout_backward");
  Tensor g = upstream;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
  return g;
}

namespace {

// scale[c] = k + alpha * sum_{|c'-c| <= size/2} a[c']^2 for every pixel.
Tensor lrn_scale(const Tensor& input, const LrnParams& p, const ImageDims& d) {
  Tensor scale(input.shape());
  const std::size_t hw = d.h * d.w;
  const long half = static_cast<long>(p.size / 2);
  for (std::size_t n = 0; n < d.n; ++n) {
    const double* a = input.data() + n * d.c * hw;
    double* s = scale.data() + n * d.c * hw;
    for (std::size_t c = 0; c < d.c; ++c) {
      const long lo = std::max(0L, static_cast<long>(c) - half);
      const long hi = std::min(static_cast<long>(d.c) - 1, static_cast<long>(c) + half);
      for (std::size_t i = 0; i < hw; ++i) {
        double sum = 0.0;
        for (long j = lo; j <= hi; ++j) {
          const double v = a[static_cast<std::size_t>(j) * hw + i];
          sum += v * v;
        }
        s[c * hw + i] = p.k + p.alpha * sum;
      }
    }
  }
  return scale;
}

void check_lrn(const LrnParams& p) {
  if (p.size == 0 || p.size % 2 == 0) throw Error("lrn window size must be odd and positive");
  if (!(p.k > 0.0)) throw Error("lrn constant k must be positive");
}

}  // namespace

Tensor lrn_forward(const Tensor& input, const LrnParams& p) {
  check_lrn(p);
  const ImageDims d = image_dims(input, "lrn");
  const Tensor scale = lrn_scale(input, p, d);
  Tensor out(input.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[i] * std::pow(scale[i], -p.beta);
  return out;
}

Tensor lrn_backward(const Tensor& input, const LrnParams& p, const Tensor& upstream) {
  check_lrn(p);
  require_same_shape(input, upstream, "lrn_backward");
  const ImageDims d = image_dims(input, "lrn");
  const Tensor scale = lrn_scale(input, p, d);
  // grad_a[i] = g[i] s[i]^-b - 2 alpha beta a[i] sum_{c in window(i)} g[c] a[c] s[c]^(-b-1)
  Tensor t(input.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = upstream[i] * input[i] * std::pow(scale[i], -p.beta - 1.0);
  }
  Tensor grad(input.shape());
  const std::size_t hw = d.h * d.w;
  const long half = static_cast<long>(p.size / 2);
  for (std::size_t n = 0; n < d.n; ++n) {
    const std::size_t off = n * d.c * hw;
    for (std::size_t c = 0; c < d.c; ++c) {
      const long lo = std::max(0L, static_cast<long>(c) - half);
      const long hi = std::min(static_cast<long>(d.c) - 1, static_cast<long>(c) + half);
      for (std::size_t i = 0; i < hw; ++i) {
        double acc = 0.0;
        for (long j = lo; j <= hi; ++j) acc += t[off + static_cast<std::size_t>(j) * hw + i];
        const std::size_t idx = off + c * hw + i;
        grad[idx] = upstream[idx] * std::pow(scale[idx], -p.beta) -
                    2.0 * p.alpha * p.beta * input[idx] * acc;
      }
    }
  }
  return grad;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects N x K logits, got " + to_string(logits.shape()));
  Tensor out(logits.shape());
  const std::size_t k = logits.dim(1);
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    const double* z = logits.data() + r * k;
    double* p = out.data() + r * k;
    const double m = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - m);
      sum += p[j];
    }
    for (std::size_t j = 0; j < k; ++j) p[j] /= sum;
  }
  return out;
}

Tensor softmax_backward(const Tensor& probabilities, const Tensor& upstream) {
  require_same_shape(probabilities, upstream, "softmax_backward");
  Tensor g(probabilities.shape());
  const std::size_t k = probabilities.dim(1);
  for (std::size_t r = 0; r < probabilities.dim(0); ++r) {
    const double* p = probabilities.data() + r * k;
    const double* u = upstream.data() + r * k;
    double inner = 0.0;
    for (std::size_t j = 0; j < k; ++j) inner += p[j] * u[j];
    for (std::size_t j = 0; j < k; ++j) g[r * k + j] = p[j] * (u[j] - inner);
  }
  return g;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax_cross_entropy expects N x K logits, got " + to_string(logits.shape()));
  }
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  if (labels.empty()) throw Error("softmax_cross_entropy: empty batch");
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  LossResult r{0.0, Tensor(logits.shape())};
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw Error("softmax_cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                  std::to_string(k) + ")");
    }
    const double* z = logits.data() + i * k;
    const double m = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - m);
    const double log_norm = m + std::log(sum);
    r.loss += log_norm - z[labels[i]];
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(z[j] - log_norm);
      r.logit_grad[i * k + j] = (p - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

void sgd_step(std::span<LayerParams* const> params, double learning_rate) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->weight_grad.all_finite() || !params[i]->bias_grad.all_finite()) {
      throw Error("sgd_step: non-finite gradient in parameter set " + std::to_string(i) +
                  " (weights " + to_string(params[i]->weights.shape()) + ")");
    }
  }
  for (LayerParams* p : params) {
    simd::axpy(-learning_rate, p->weight_grad.data(), p->weights.data(), p->weights.size());
    simd::axpy(-learning_rate, p->bias_grad.data(), p->bias.data(), p->bias.size());
    p->zero_grad();
  }
}

}  // namespace semtrack::nn

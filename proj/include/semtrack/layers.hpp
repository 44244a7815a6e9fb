#pragma once

// Forward and backward passes for the fixed layer set of the tracker
// networks. Image-like tensors are N x C x H x W; a rank-3 C x H x W input is
// treated as a batch of one and yields a rank-3 result. Dense tensors are
// N x features. Backward functions accumulate parameter gradients into the
// LayerParams they are given and return the gradient with respect to the
// layer input.

#include <cstddef>
#include <span>
#include <vector>

#include "semtrack/random.hpp"
#include "semtrack/tensor.hpp"

namespace semtrack::nn {

struct LayerParams {
  Tensor weights;
  Tensor bias;
  Tensor weight_grad;
  Tensor bias_grad;

  // Zero weights and bias with matching zeroed gradients.
  static LayerParams zeros(Shape weight_shape, Shape bias_shape);
  void zero_grad();
};

// Weights ~ N(0, stddev^2), biases zero.
void init_gaussian(LayerParams& p, double stddev, Rng& rng);

struct LrnParams {
  std::size_t size = 5;  // channels in the normalisation window
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;
};

// ---- convolution -----------------------------------------------------------

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t pad);

Tensor conv2d_forward(const Tensor& input, const LayerParams& params,
                      std::size_t stride, std::size_t pad);
Tensor conv2d_backward(const Tensor& input, LayerParams& params,
                       std::size_t stride, std::size_t pad,
                       const Tensor& upstream);

// ---- elementwise -----------------------------------------------------------

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

// ---- pooling ---------------------------------------------------------------

struct MaxPoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

MaxPoolResult maxpool_forward(const Tensor& input, std::size_t window,
                              std::size_t stride);
Tensor maxpool_backward(const Shape& input_shape,
                        std::span<const std::size_t> argmax,
                        const Tensor& upstream);

// ---- fully connected -------------------------------------------------------

// input N x in, weights out x in, bias out.
Tensor linear_forward(const Tensor& input, const LayerParams& params);
Tensor linear_backward(const Tensor& input, LayerParams& params,
                       const Tensor& upstream);

// ---- dropout ---------------------------------------------------------------

struct DropoutResult {
  Tensor output;
  Tensor mask;  // empty when the layer acted as the identity
};

// Inverted dropout: kept units are scaled by 1/(1-rate), so evaluation mode
// is the identity.
DropoutResult dropout_forward(const Tensor& input, double rate, bool train,
                              Rng* rng);
Tensor dropout_backward(const Tensor& mask, const Tensor& upstream);

// ---- local response normalisation (across channels) ------------------------

Tensor lrn_forward(const Tensor& input, const LrnParams& p);
Tensor lrn_backward(const Tensor& input, const LrnParams& p,
                    const Tensor& upstream);

// ---- softmax and loss ------------------------------------------------------

// Row-wise softmax of an N x K tensor.
Tensor softmax(const Tensor& logits);
// Gradient through softmax given its output probabilities.
Tensor softmax_backward(const Tensor& probabilities, const Tensor& upstream);

struct LossResult {
  double loss;       // mean negative log-likelihood over rows
  Tensor logit_grad; // (softmax - onehot) / N
};

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// ---- optimisation ----------------------------------------------------------

// p -= lr * grad for every parameter, then zero all gradients. Throws
// semtrack::Error before touching anything if a gradient is not finite.
void sgd_step(std::span<LayerParams* const> params, double learning_rate);

}  // namespace semtrack::nn

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semtrack/layers.hpp"

namespace semtrack::nn {

enum class LayerKind { kConv, kRelu, kLrn, kMaxPool, kLinear, kDropout, kSoftmax };

const char* to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::string name;
  std::size_t outputs = 0;  // conv output channels or linear units
  std::size_t kernel = 0;   // conv kernel side or pooling window
  std::size_t stride = 1;
  std::size_t pad = 0;
  double dropout_rate = 0.5;
  LrnParams lrn;

  static LayerSpec conv(std::string name, std::size_t channels, std::size_t kernel,
                        std::size_t stride, std::size_t pad);
  static LayerSpec linear(std::string name, std::size_t units);
  static LayerSpec relu();
  static LayerSpec lrn_layer(LrnParams p = {});
  static LayerSpec maxpool(std::size_t window, std::size_t stride);
  static LayerSpec dropout(double rate);
  static LayerSpec softmax();
};

struct Layer {
  LayerSpec spec;
  LayerParams params;  // empty for parameter-free layers
  bool has_params() const { return !params.weights.empty(); }
};

// Per-call record of what backward needs.
struct Tape {
  std::vector<Tensor> inputs;
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<Tensor> masks;
  std::vector<Shape> output_shapes;
  Tensor last_output;
};

struct ForwardMode {
  bool train = false;
  Rng* rng = nullptr;  // required when train is set and dropout is active
};

// Ordered chain of layers built against a fixed per-sample input shape.
class Sequential {
 public:
  Sequential() = default;
  // Validates every layer against `sample_shape` (C x H x W or D) and
  // allocates zeroed parameters.
  Sequential(std::vector<LayerSpec> specs, Shape sample_shape);

  // Conv layers: N(0, 2/fan_in). Linear layers: N(0, linear_stddev^2).
  void initialize(Rng& rng, double linear_stddev);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::size_t output_width() const;

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  // `input` is a batch: N followed by the sample shape.
  Tensor forward(const Tensor& input, ForwardMode mode = {}, Tape* tape = nullptr) const;
  // Accumulates parameter gradients; returns the input gradient.
  Tensor backward(const Tape& tape, const Tensor& upstream);

  std::vector<LayerParams*> parameters();
  void zero_grad();

  // FNV-1a over all parameter bytes.
  std::uint64_t checksum() const;

 private:
  std::vector<Layer> layers_;
  Shape input_shape_;
  Shape output_shape_;
};

}  // namespace semtrack::nn

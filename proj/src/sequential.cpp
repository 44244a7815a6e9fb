#include "semtrack/sequential.hpp"

#include <cmath>
#include <cstring>

#include "semtrack/error.hpp"

namespace semtrack::nn {

using semtrack::to_string;

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kLrn: return "lrn";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kLinear: return "linear";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kSoftmax: return "softmax";
  }
  return "?";
}

LayerSpec LayerSpec::conv(std::string name, std::size_t channels, std::size_t kernel,
                          std::size_t stride, std::size_t pad) {
  LayerSpec s;
  s.kind = LayerKind::kConv;
  s.name = std::move(name);
  s.outputs = channels;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  return s;
}

LayerSpec LayerSpec::linear(std::string name, std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::kLinear;
  s.name = std::move(name);
  s.outputs = units;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::kRelu;
  return s;
}

LayerSpec LayerSpec::lrn_layer(LrnParams p) {
  LayerSpec s;
  s.kind = LayerKind::kLrn;
  s.lrn = p;
  return s;
}

LayerSpec LayerSpec::maxpool(std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool;
  s.kernel = window;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::kDropout;
  s.dropout_rate = rate;
  return s;
}

LayerSpec LayerSpec::softmax() {
  LayerSpec s;
  s.kind = LayerKind::kSoftmax;
  return s;
}

Sequential::Sequential(std::vector<LayerSpec> specs, Shape sample_shape)
    : input_shape_(sample_shape) {
  Shape shape = std::move(sample_shape);
  for (LayerSpec& spec : specs) {
    Layer layer{std::move(spec), {}};
    const LayerSpec& s = layer.spec;
    switch (s.kind) {
      case LayerKind::kConv: {
        if (shape.size() != 3) {
          throw ShapeError("layer " + s.name + ": conv needs a C x H x W input, got " + to_string(shape));
        }
        if (s.outputs == 0) throw ShapeError("layer " + s.name + ": conv needs output channels");
        const std::size_t oh = conv_output_extent(shape[1], s.kernel, s.stride, s.pad);
        const std::size_t ow = conv_output_extent(shape[2], s.kernel, s.stride, s.pad);
        layer.params = LayerParams::zeros({s.outputs, shape[0], s.kernel, s.kernel}, {s.outputs});
        shape = {s.outputs, oh, ow};
        break;
      }
      case LayerKind::kMaxPool: {
        if (shape.size() != 3) throw ShapeError("maxpool needs a C x H x W input, got " + to_string(shape));
        shape = {shape[0], conv_output_extent(shape[1], s.kernel, s.stride, 0),
                 conv_output_extent(shape[2], s.kernel, s.stride, 0)};
        break;
      }
      case LayerKind::kLrn:
        if (shape.size() != 3) throw ShapeError("lrn needs a C x H x W input, got " + to_string(shape));
        break;
      case LayerKind::kLinear: {
        if (s.outputs == 0) throw ShapeError("layer " + s.name + ": linear needs output units");
        const std::size_t in = element_count(shape);
        layer.params = LayerParams::zeros({s.outputs, in}, {s.outputs});
        shape = {s.outputs};
        break;
      }
      case LayerKind::kDropout:
        if (!(s.dropout_rate >= 0.0 && s.dropout_rate < 1.0)) {
          throw Error("dropout rate must lie in [0, 1)");
        }
        break;
      case LayerKind::kSoftmax:
        if (shape.size() != 1) throw ShapeError("softmax needs a flat input, got " + to_string(shape));
        break;
      case LayerKind::kRelu:
        break;
    }
    layers_.push_back(std::move(layer));
  }
  output_shape_ = shape;
}

void Sequential::initialize(Rng& rng, double linear_stddev) {
  for (Layer& l : layers_) {
    if (l.spec.kind == LayerKind::kConv) {
      const double fan_in = static_cast<double>(l.params.weights.size() / l.params.weights.dim(0));
      init_gaussian(l.params, std::sqrt(2.0 / fan_in), rng);
    } else if (l.spec.kind == LayerKind::kLinear) {
      init_gaussian(l.params, linear_stddev, rng);
    }
  }
}

std::size_t Sequential::output_width() const { return element_count(output_shape_); }

namespace {
Shape batch_shape(std::size_t n, const Shape& sample) {
  Shape s{n};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}
}  // namespace

Tensor Sequential::forward(const Tensor& input, ForwardMode mode, Tape* tape) const {
  if (input.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), input.shape().begin() + 1)) {
    throw ShapeError("network expects batches of " + to_string(input_shape_) + ", got " +
                     to_string(input.shape()));
  }
  const std::size_t n = input.dim(0);
  if (tape) {
    tape->inputs.clear();
    tape->argmax.assign(layers_.size(), {});
    tape->masks.assign(layers_.size(), Tensor());
    tape->output_shapes.clear();
  }
  Tensor x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const LayerSpec& s = l.spec;
    // Dense layers see N x features regardless of the producer's layout.
    if ((s.kind == LayerKind::kLinear || s.kind == LayerKind::kSoftmax) && x.rank() != 2) {
      x = std::move(x).reshaped({n, x.size() / n});
    }
    if (tape) tape->inputs.push_back(x);
    switch (s.kind) {
      case LayerKind::kConv: x = conv2d_forward(x, l.params, s.stride, s.pad); break;
      case LayerKind::kRelu: x = relu_forward(x); break;
      case LayerKind::kLrn: x = lrn_forward(x, s.lrn); break;
      case LayerKind::kMaxPool: {
        MaxPoolResult r = maxpool_forward(x, s.kernel, s.stride);
        if (tape) tape->argmax[i] = std::move(r.argmax);
        x = std::move(r.output);
        break;
      }
      case LayerKind::kLinear: x = linear_forward(x, l.params); break;
      case LayerKind::kDropout: {
        DropoutResult r = dropout_forward(x, s.dropout_rate, mode.train, mode.rng);
        if (tape) tape->masks[i] = std::move(r.mask);
        x = std::move(r.output);
        break;
      }
      case LayerKind::kSoftmax: x = softmax(x); break;
    }
    if (tape) tape->output_shapes.push_back(x.shape());
  }
  if (x.rank() != output_shape_.size() + 1) x = std::move(x).reshaped(batch_shape(n, output_shape_));
  if (tape) tape->last_output = x;
  return x;
}

Tensor Sequential::backward(const Tape& tape, const Tensor& upstream) {
  if (tape.inputs.size() != layers_.size() || tape.output_shapes.size() != layers_.size()) {
    throw Error("backward called without a matching forward tape");
  }
  if (upstream.shape() != tape.last_output.shape()) {
    throw ShapeError("backward: upstream gradient shape " + to_string(upstream.shape()) +
                     " does not match network output " + to_string(tape.last_output.shape()));
  }
  Tensor g = upstream;
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    Layer& l = layers_[idx];
    const Tensor& in = tape.inputs[idx];
    g = std::move(g).reshaped(tape.output_shapes[idx]);
    switch (l.spec.kind) {
      case LayerKind::kConv: g = conv2d_backward(in, l.params, l.spec.stride, l.spec.pad, g); break;
      case LayerKind::kRelu: g = relu_backward(in, g); break;
      case LayerKind::kLrn: g = lrn_backward(in, l.spec.lrn, g); break;
      case LayerKind::kMaxPool: g = maxpool_backward(in.shape(), tape.argmax[idx], g); break;
      case LayerKind::kLinear: g = linear_backward(in, l.params, g); break;
      case LayerKind::kDropout: g = dropout_backward(tape.masks[idx], g); break;
      case LayerKind::kSoftmax: g = softmax_backward(softmax(in), g); break;
    }
  }
  return g;
}

std::vector<LayerParams*> Sequential::parameters() {
  std::vector<LayerParams*> out;
  for (Layer& l : layers_) {
    if (l.has_params()) out.push_back(&l.params);
  }
  return out;
}

void Sequential::zero_grad() {
  for (LayerParams* p : parameters()) p->zero_grad();
}

std::uint64_t Sequential::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const Tensor& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Layer& l : layers_) {
    if (!l.has_params()) continue;
    mix(l.params.weights);
    mix(l.params.bias);
  }
  return h;
}

}  // namespace semtrack::nn

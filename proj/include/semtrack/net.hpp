#pragma once

// The tracker networks: a shared convolutional trunk (NetS) feeding a
// category classifier (NetC) and one foreground/background head per
// category (the NetT branches).

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semtrack/regression.hpp"
#include "semtrack/sequential.hpp"

namespace semtrack {

struct CategoryLabel {
  int index = 0;
  std::string name;
  bool is_category_x = false;

  friend bool operator==(const CategoryLabel&, const CategoryLabel&) = default;
};

struct ModelConfig {
  // Named target categories. The catch-all category X is appended after
  // them, so the classifier has categories.size() + 1 outputs.
  std::vector<std::string> categories{"square", "disk", "triangle"};
  std::string category_x_name = "X";
  std::size_t input_side = 51;
  std::array<std::size_t, 3> conv_channels{16, 32, 32};
  std::size_t hidden_c = 64;
  std::size_t hidden_t = 64;
  double dropout_rate = 0.5;
  nn::LrnParams lrn{};
  double linear_init_stddev = 0.01;
  std::uint64_t seed = 1;

  // 107 px input, 64/256/256 conv channels, 256-wide heads, seven named
  // categories plus X.
  static ModelConfig paper_scale();
};

struct ModelBundle {
  ModelConfig config;
  std::vector<CategoryLabel> labels;  // index order; X is last
  nn::Sequential net_s;
  nn::Sequential net_c;
  std::vector<nn::Sequential> net_t;  // one branch per label, same order
  std::optional<RegressorSet> regressors;

  std::size_t num_categories() const { return labels.size(); }
  std::size_t feature_width() const { return net_s.output_width(); }
  const CategoryLabel& category_x() const { return labels.back(); }
  // Throws on an unknown name.
  const CategoryLabel& label(std::string_view name) const;
};

// NetS: conv1 (11x11 stride 4) relu lrn pool2, conv2 (5x5 pad 2) relu lrn
// pool2, conv3 (3x3 pad 1) relu. NetC: fc4_c relu dropout fc5_c. Each NetT
// branch: fc4_t relu dropout fc5_t (2 outputs: background, foreground).
ModelBundle build_model(const ModelConfig& config);

// Per-sample standardisation of an N x 3 x S x S batch: subtract the
// sample mean, divide by its standard deviation (floored at 1e-2). Applied
// to every NetS input.
void standardize_samples(Tensor& batch);

// Flattened NetS activations of standardised crops, N x D. Never mutates
// the model.
Tensor forward_shared(const ModelBundle& model, const Tensor& batch);

// NetC logits and softmax probabilities, N x K.
Tensor classify_logits(const ModelBundle& model, const Tensor& features);
Tensor forward_classify(const ModelBundle& model, const Tensor& features);

// Foreground probability per row from the given NetT branch.
std::vector<double> forward_track(const ModelBundle& model, const CategoryLabel& branch,
                                  const Tensor& features);

// Index of the foreground output of every NetT branch.
inline constexpr int kForeground = 1;
inline constexpr int kBackground = 0;

// Model container: 8-byte magic "SEMTRKM1", uint64 little-endian header
// length, JSON header, then the raw little-endian float64 payload of each
// header entry in order.
void save_model(const ModelBundle& model, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace semtrack

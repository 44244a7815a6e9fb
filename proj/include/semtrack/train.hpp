#pragma once

// Offline training: sample preparation around ground-truth boxes, a joint
// NetS+NetC bootstrap, then NetC and per-category NetT training on frozen
// trunk features.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "semtrack/kv_config.hpp"
#include "semtrack/net.hpp"
#include "semtrack/sequence.hpp"

namespace semtrack {

struct TrainRecipe {
  std::size_t positives = 50;   // per frame, shared by NetC and NetT
  std::size_t negatives = 200;  // per frame, NetT background
  // Extra NetC items per frame: background boxes labelled as category X.
  std::size_t netc_background = 0;
  OverlapWindow positive_window{0, 0.8, 1.0};
  OverlapWindow negative_window{0, 0.0, 0.2};
  std::size_t frame_stride = 1;

  static TrainRecipe full_scale();
};

// A sample box on a frame; the crop is produced on demand.
struct TrainItem {
  std::shared_ptr<const FrameImage> frame;
  BBox box;
  int category = 0;  // NetC label
  int fg_label = 0;  // kForeground or kBackground
  std::size_t sequence = 0;
  std::size_t frame_index = 0;
};

struct TrainDataset {
  std::vector<TrainItem> items;
  std::vector<std::size_t> netc;  // indices into items, shuffled
  std::vector<std::size_t> nett;  // positives reuse the NetC items
  std::size_t skipped_frames = 0;
  std::vector<std::string> warnings;
};

// Every sequence must carry a category known to the model.
TrainDataset prepare_dataset(std::span<const Sequence> sequences, const ModelBundle& model,
                             const TrainRecipe& recipe, Rng& rng);

Tensor item_crops(std::span<const TrainItem> items, std::span<const std::size_t> which, std::size_t side);
// NetS features (N x D) of the selected items, computed in chunks.
Tensor item_features(const ModelBundle& model, std::span<const TrainItem> items,
                     std::span<const std::size_t> which);

struct FitOptions {
  double lr = 0.01;
  std::size_t batch = 128;
  std::size_t epochs = 20;
  // When non-zero, run this many single-batch iterations instead of epochs.
  std::size_t iterations = 0;
  // Iteration mode only: share of each batch drawn from label 1 rows.
  double positive_fraction = 0.0;
};

struct FitLog {
  std::vector<double> losses;  // per epoch, or per iteration in iteration mode
  std::size_t iterations = 0;
};

// SGD on softmax cross-entropy for a head that maps N x D features to logits.
FitLog fit_head(nn::Sequential& head, const Tensor& features, std::span<const int> labels,
                const FitOptions& options, Rng& rng);

double head_accuracy(const nn::Sequential& head, const Tensor& features, std::span<const int> labels);

struct HeadReport {
  std::string name;
  FitLog log;
  std::size_t train_items = 0;
  std::size_t holdout_items = 0;
  double holdout_accuracy = 0.0;  // NaN without holdout items
};

// NetS is never touched.
HeadReport train_netc(ModelBundle& model, const Tensor& features, std::span<const int> labels,
                      const FitOptions& options, Rng& rng);
// Only the named branch changes.
HeadReport train_nett_branch(ModelBundle& model, const CategoryLabel& branch, const Tensor& features,
                             std::span<const int> fg_labels, const FitOptions& options, Rng& rng);

// Joint NetS+NetC SGD directly on crops of the selected items.
FitLog bootstrap_shared(ModelBundle& model, std::span<const TrainItem> items,
                        std::span<const std::size_t> which, const FitOptions& options, Rng& rng);

struct TrainConfig {
  ModelConfig model;
  TrainRecipe recipe;
  // Sequences of each category (by position) withheld for accuracy checks.
  std::size_t holdout_per_category = 1;
  std::size_t bootstrap_items = 6000;
  FitOptions bootstrap{0.02, 32, 6};
  FitOptions netc{0.05, 128, 20};
  FitOptions nett{0.05, 128, 20};
  std::uint64_t seed = 1;

  static TrainConfig desk();
  // Reads "model.*" and "train.*" keys.
  void apply(const KvConfig& kv);
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::size_t train_sequences = 0;
  std::size_t holdout_sequences = 0;
  std::size_t netc_items = 0;
  std::size_t nett_items = 0;
  std::size_t skipped_frames = 0;
  std::vector<std::string> warnings;
  FitLog bootstrap;
  HeadReport netc;
  std::vector<HeadReport> branches;
  std::uint64_t net_s_checksum = 0;

  nlohmann::ordered_json to_json() const;
};

// Sequences produced one at a time, so only frames referenced by sampled
// items stay in memory. Categories are known before loading.
struct SequenceSource {
  std::vector<std::string> categories;
  std::function<Sequence(std::size_t)> load;

  std::size_t size() const { return categories.size(); }
  static SequenceSource from(std::span<const Sequence> sequences);
};

// Whole offline pipeline on labelled sequences; returns the trained model.
ModelBundle train_offline(const SequenceSource& source, const TrainConfig& config, TrainReport& report);

}  // namespace semtrack

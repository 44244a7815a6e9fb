#pragma once

// Online tracking: first-frame initialisation, candidate scoring with the
// four-way NetC/NetT sample typing, expectation-based target estimation and
// ambiguity-triggered adaptation of the heads.

#include <array>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "semtrack/kv_config.hpp"
#include "semtrack/net.hpp"
#include "semtrack/sequence.hpp"
#include "semtrack/train.hpp"

namespace semtrack {

// I: same category, foreground. II: same category, background.
// III: other category, foreground. IV: other category, background.
enum class SampleType { kI = 0, kII = 1, kIII = 2, kIV = 3 };

const char* to_string(SampleType t);

struct SampleRecord {
  BBox box;
  std::vector<double> features;
  int f_c = 0;  // 1 iff NetC's argmax is the active category
  std::vector<double> f_c_probs;
  double f_t = 0.0;
  SampleType type = SampleType::kIV;
  double score = 0.0;  // f_c * f_t
};

struct TrackerConfig {
  std::size_t candidates = 256;
  std::size_t top_n = 5;
  double fg_threshold = 0.5;
  double as_threshold = 0.2;  // ratio of candidates
  std::size_t max_rounds = 5;
  double candidate_xy_factor = 0.3;  // R, relative to min(w, h) of the first box
  double candidate_scale_sigma = 0.05;

  // Initialisation.
  std::size_t vote_samples = 64;
  double vote_xy_factor = 0.1;
  double vote_scale_sigma = 0.05;
  std::size_t init_positives = 500;
  std::size_t init_negatives = 5000;
  FitOptions init_fit{0.001, 128, 0, 30, 0.25};
  std::size_t regressor_samples = 10000;
  double regressor_overlap_min = 0.6;
  double ridge = 1.0;

  // Adaptation.
  FitOptions adapt_fit{0.001, 128, 0, 10, 0.0};
  std::size_t pool_capacity = 2000;

  // Ablations.
  bool use_netc = true;
  bool adapt = true;
  std::optional<std::string> branch_override;

  std::uint64_t seed = 1;

  static TrackerConfig desk();
  // Reads "track.*" keys.
  void apply(const KvConfig& kv);
};

enum class StopReason { kBelowThreshold, kNotDecreasing, kMaxRounds, kPoolEmpty, kDisabled };

const char* to_string(StopReason r);

struct PoolRecord {
  std::vector<double> features;
  bool positive = false;  // Type I (or first-frame positive) vs Type IV
};

struct TrackerState {
  ModelBundle model;
  TrackerConfig config;
  CategoryLabel active;
  RegressorSet regressors;
  Perturbation candidate_noise;
  BBox last_estimate;
  std::deque<PoolRecord> pool;
  std::size_t frame_index = 0;
  std::uint64_t stream_seed = 0;  // per-stage streams derive from this

  // Initialisation metadata.
  std::vector<std::size_t> vote_counts;  // per label
  bool low_confidence = false;
  double gt_fg_before = 0.0;
  double gt_fg_after = 0.0;
};

struct FrameResult {
  BBox estimate;
  bool scored = false;  // false for the initial frame
  bool lost = false;
  std::array<std::size_t, 4> type_counts{};
  std::size_t adaptation_rounds = 0;
  std::vector<double> as_ratio_trace;
  StopReason stop = StopReason::kDisabled;
  std::string error;

  friend bool operator==(const FrameResult&, const FrameResult&) = default;
};

TrackerState initialize(const ModelBundle& model, const FrameImage& frame, const BBox& gt,
                        const TrackerConfig& config, Rng rng);

std::vector<SampleRecord> score_candidates(TrackerState& state, const FrameImage& frame);
// Re-evaluates f_c, f_t, type and score from the stored features.
void rescore(const TrackerState& state, std::vector<SampleRecord>& records);
std::array<std::size_t, 4> type_counts(const std::vector<SampleRecord>& records);

// Throws when there is no Type I record.
BBox estimate_target(const TrackerState& state, const std::vector<SampleRecord>& records);

struct AdaptResult {
  std::vector<double> as_ratio_trace;
  std::size_t rounds = 0;
  StopReason stop = StopReason::kDisabled;
};

AdaptResult adapt(TrackerState& state, std::vector<SampleRecord>& records);

void push_pool(TrackerState& state, const SampleRecord& record);

struct TrackResult {
  std::vector<FrameResult> frames;
  std::string active_category;
  std::vector<std::size_t> vote_counts;
  bool low_confidence = false;
  double gt_fg_before = 0.0;
  double gt_fg_after = 0.0;

  std::vector<BBox> estimates() const;
  nlohmann::ordered_json to_json(const ModelBundle& model) const;
};

// Called with each tracked frame's freshly scored records, before adaptation.
using FrameObserver = std::function<void(std::size_t frame, const std::vector<SampleRecord>& records)>;

TrackResult track_sequence(const ModelBundle& model, const Sequence& sequence, const BBox& first_gt,
                           const TrackerConfig& config, const FrameObserver& observe = {});

}  // namespace semtrack

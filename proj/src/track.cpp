#include "semtrack/track.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semtrack/error.hpp"
#include "semtrack/log.hpp"

namespace semtrack {

const char* to_string(SampleType t) {
  switch (t) {
    case SampleType::kI: return "I";
    case SampleType::kII: return "II";
    case SampleType::kIII: return "III";
    case SampleType::kIV: return "IV";
  }
  return "?";
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kBelowThreshold: return "below_threshold";
    case StopReason::kNotDecreasing: return "not_decreasing";
    case StopReason::kMaxRounds: return "max_rounds";
    case StopReason::kPoolEmpty: return "pool_empty";
    case StopReason::kDisabled: return "disabled";
  }
  return "?";
}

TrackerConfig TrackerConfig::desk() {
  TrackerConfig c;
  c.init_positives = 100;
  c.init_negatives = 400;
  c.regressor_samples = 1000;
  c.ridge = 1000.0;
  c.init_fit.lr = 0.01;
  c.adapt_fit.lr = 0.01;
  return c;
}

void TrackerConfig::apply(const KvConfig& kv) {
  kv.get("track.candidates", candidates);
  kv.get("track.top_n", top_n);
  kv.get("track.fg_threshold", fg_threshold);
  kv.get("track.as_threshold", as_threshold);
  kv.get("track.max_rounds", max_rounds);
  kv.get("track.candidate_xy_factor", candidate_xy_factor);
  kv.get("track.candidate_scale_sigma", candidate_scale_sigma);
  kv.get("track.vote_samples", vote_samples);
  kv.get("track.vote_xy_factor", vote_xy_factor);
  kv.get("track.vote_scale_sigma", vote_scale_sigma);
  kv.get("track.init_positives", init_positives);
  kv.get("track.init_negatives", init_negatives);
  kv.get("track.init_lr", init_fit.lr);
  kv.get("track.init_batch", init_fit.batch);
  kv.get("track.init_iterations", init_fit.iterations);
  kv.get("track.init_positive_fraction", init_fit.positive_fraction);
  kv.get("track.regressor_samples", regressor_samples);
  kv.get("track.regressor_overlap_min", regressor_overlap_min);
  kv.get("track.ridge", ridge);
  kv.get("track.adapt_lr", adapt_fit.lr);
  kv.get("track.adapt_batch", adapt_fit.batch);
  kv.get("track.adapt_iterations", adapt_fit.iterations);
  kv.get("track.pool_capacity", pool_capacity);
  kv.get("track.use_netc", use_netc);
  kv.get("track.adapt", adapt);
  std::string branch;
  kv.get("track.branch", branch);
  if (!branch.empty()) branch_override = branch;
}

namespace {

constexpr std::size_t kChunk = 128;

BBox bounds_of(const FrameImage& f) {
  return BBox::from_corner(0.0, 0.0, static_cast<double>(f.width()), static_cast<double>(f.height()));
}

Tensor features_for(const ModelBundle& model, const FrameImage& frame, std::span<const BBox> boxes) {
  const std::size_t d = model.feature_width();
  Tensor out({boxes.size(), d});
  for (std::size_t b = 0; b < boxes.size(); b += kChunk) {
    const auto chunk = boxes.subspan(b, std::min(kChunk, boxes.size() - b));
    const Tensor f = forward_shared(model, crop_batch(frame, chunk, model.config.input_side));
    std::copy(f.data(), f.data() + f.size(), out.data() + b * d);
  }
  return out;
}

std::size_t argmax_row(const Tensor& t, std::size_t row) {
  const std::size_t k = t.dim(1);
  const double* p = t.data() + row * k;
  return static_cast<std::size_t>(std::max_element(p, p + k) - p);
}

nn::Sequential& branch_of(TrackerState& s) { return s.model.net_t[static_cast<std::size_t>(s.active.index)]; }

BBox clamp_to_frame(BBox b, const FrameImage& frame) {
  const double fw = static_cast<double>(frame.width()), fh = static_cast<double>(frame.height());
  b.w = std::clamp(b.w, kMinBoxSide, fw);
  b.h = std::clamp(b.h, kMinBoxSide, fh);
  b.x = std::clamp(b.x, 0.0, fw);
  b.y = std::clamp(b.y, 0.0, fh);
  return b;
}

// Fine-tunes `head` on pool features with the given label mapping.
void fit_on_pool(nn::Sequential& head, const std::deque<PoolRecord>& pool, int pos_label, int neg_label,
                 FitOptions options, Rng& rng) {
  const std::size_t d = pool.front().features.size();
  Tensor x({pool.size(), d});
  std::vector<int> y(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    std::copy(pool[i].features.begin(), pool[i].features.end(), x.data() + i * d);
    y[i] = pool[i].positive ? pos_label : neg_label;
  }
  options.batch = std::min(options.batch, pool.size());
  fit_head(head, x, y, options, rng);
}

bool ambiguous(SampleType t) { return t == SampleType::kII || t == SampleType::kIII; }

Rng stage_rng(const TrackerState& s, const std::string& stage) { return make_rng(s.stream_seed, stage); }

}  // namespace

void push_pool(TrackerState& state, const SampleRecord& record) {
  if (ambiguous(record.type)) return;
  if (state.config.pool_capacity == 0) return;
  state.pool.push_back({record.features, record.type == SampleType::kI});
  while (state.pool.size() > state.config.pool_capacity) state.pool.pop_front();
}

TrackerState initialize(const ModelBundle& model, const FrameImage& frame, const BBox& gt,
                        const TrackerConfig& config, Rng rng) {
  const BBox bounds = bounds_of(frame);
  if (!gt.valid() || gt.x < 0.0 || gt.y < 0.0 || gt.x > bounds.right() || gt.y > bounds.bottom()) {
    throw Error("initialize: first box lies outside the frame");
  }
  if (config.candidates == 0 || config.top_n == 0) throw Error("initialize: candidate and top counts must be positive");
  TrackerState s{model, config, {}, {}, {}, gt, {}, 0, rng(), {}, false, 0.0, 0.0};
  // Separate streams keep ablation runs on identical samples.
  Rng vote_rng = stage_rng(s, "vote"), sample_rng = stage_rng(s, "samples"), fit_rng = stage_rng(s, "fit");
  Rng reg_rng = stage_rng(s, "regressor");
  s.candidate_noise = Perturbation::for_box(gt, config.candidate_xy_factor, config.candidate_scale_sigma);

  // Category vote over tight samples; row 0 is the box itself.
  std::vector<BBox> vote{gt};
  if (config.vote_samples > 1) {
    for (const BBox& b : sample_gaussian(gt, Perturbation::for_box(gt, config.vote_xy_factor, config.vote_scale_sigma),
                                         config.vote_samples - 1, bounds, vote_rng)) {
      if (iou(b, gt) >= 0.8) vote.push_back(b);
    }
  }
  const Tensor vote_features = features_for(s.model, frame, vote);
  const Tensor vote_probs = forward_classify(s.model, vote_features);
  s.vote_counts.assign(s.model.num_categories(), 0);
  for (std::size_t i = 0; i < vote.size(); ++i) ++s.vote_counts[argmax_row(vote_probs, i)];
  const auto top = std::max_element(s.vote_counts.begin(), s.vote_counts.end());
  std::size_t winner = static_cast<std::size_t>(top - s.vote_counts.begin());
  if (std::count(s.vote_counts.begin(), s.vote_counts.end(), *top) > 1) {
    winner = argmax_row(vote_probs, 0);
    s.low_confidence = true;
  }
  if (config.branch_override) {
    s.active = s.model.label(*config.branch_override);
  } else if (!config.use_netc) {
    s.active = s.model.labels.front();
  } else {
    s.active = s.model.labels[winner];
  }

  const Tensor gt_feature = slice_rows(vote_features, 0, 1);
  s.gt_fg_before = forward_track(s.model, s.active, gt_feature)[0];

  // Branch fine-tuning on first-frame samples.
  const std::vector<BBox> pos = sample_by_overlap(gt, bounds, {config.init_positives, 0.8, 1.0}, sample_rng);
  const std::vector<BBox> neg = sample_by_overlap(gt, bounds, {config.init_negatives, 0.0, 0.2}, sample_rng);
  std::vector<BBox> boxes = pos;
  boxes.insert(boxes.end(), neg.begin(), neg.end());
  Tensor feats = features_for(s.model, frame, boxes);
  std::vector<int> labels(pos.size(), kForeground);
  labels.resize(boxes.size(), kBackground);
  if (config.use_netc) {
    // Tight samples NetC assigns to another category count as background.
    std::vector<std::size_t> other;
    for (std::size_t i = 0; i < vote.size(); ++i) {
      if (static_cast<int>(argmax_row(vote_probs, i)) != s.active.index) other.push_back(i);
    }
    if (!other.empty()) {
      const Tensor parts[] = {feats, gather_rows(vote_features, other)};
      feats = concat_rows(parts);
      labels.resize(labels.size() + other.size(), kBackground);
    }
  }
  fit_head(branch_of(s), feats, labels, config.init_fit, fit_rng);
  s.gt_fg_after = forward_track(s.model, s.active, gt_feature)[0];

  // Pool: negatives first so FIFO eviction drops them before the positives.
  const std::size_t d = s.model.feature_width();
  auto row = [&](std::size_t i) {
    return std::vector<double>(feats.data() + i * d, feats.data() + (i + 1) * d);
  };
  for (std::size_t i = pos.size(); i < pos.size() + neg.size(); ++i) {
    s.pool.push_back({row(i), false});
  }
  for (std::size_t i = 0; i < pos.size(); ++i) s.pool.push_back({row(i), true});
  while (s.pool.size() > config.pool_capacity) s.pool.pop_front();

  // Bounding-box regressors, fit once.
  const std::vector<BBox> reg_boxes =
      sample_by_overlap(gt, bounds, {config.regressor_samples, config.regressor_overlap_min, 1.0}, reg_rng);
  const Tensor reg_features = features_for(s.model, frame, reg_boxes);
  Tensor targets({reg_boxes.size(), 4});
  for (std::size_t i = 0; i < reg_boxes.size(); ++i) {
    const BoxDelta t = regression_targets(gt, reg_boxes[i]);
    std::copy(t.begin(), t.end(), targets.data() + i * 4);
  }
  s.regressors = fit_regressors(reg_features, targets, config.ridge);
  return s;
}

void rescore(const TrackerState& state, std::vector<SampleRecord>& records) {
  if (records.empty()) return;
  const std::size_t d = state.model.feature_width();
  Tensor x({records.size(), d});
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].features.size() != d) throw ShapeError("rescore: record feature width mismatch");
    std::copy(records[i].features.begin(), records[i].features.end(), x.data() + i * d);
  }
  const std::vector<double> fg = forward_track(state.model, state.active, x);
  Tensor probs;
  if (state.config.use_netc) probs = forward_classify(state.model, x);
  for (std::size_t i = 0; i < records.size(); ++i) {
    SampleRecord& r = records[i];
    if (state.config.use_netc) {
      const std::size_t k = probs.dim(1);
      r.f_c_probs.assign(probs.data() + i * k, probs.data() + (i + 1) * k);
      r.f_c = static_cast<int>(argmax_row(probs, i)) == state.active.index ? 1 : 0;
    } else {
      r.f_c_probs.clear();
      r.f_c = 1;
    }
    r.f_t = fg[i];
    const bool foreground = r.f_t >= state.config.fg_threshold;
    r.type = r.f_c == 1 ? (foreground ? SampleType::kI : SampleType::kII)
                        : (foreground ? SampleType::kIII : SampleType::kIV);
    r.score = static_cast<double>(r.f_c) * r.f_t;
  }
}

std::vector<SampleRecord> score_candidates(TrackerState& state, const FrameImage& frame) {
  Rng rng = stage_rng(state, "candidates/" + std::to_string(state.frame_index));
  const std::vector<BBox> boxes =
      sample_gaussian(state.last_estimate, state.candidate_noise, state.config.candidates, bounds_of(frame), rng);
  const Tensor f = features_for(state.model, frame, boxes);
  const std::size_t d = state.model.feature_width();
  std::vector<SampleRecord> records(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    records[i].box = boxes[i];
    records[i].features.assign(f.data() + i * d, f.data() + (i + 1) * d);
  }
  rescore(state, records);
  return records;
}

std::array<std::size_t, 4> type_counts(const std::vector<SampleRecord>& records) {
  std::array<std::size_t, 4> c{};
  for (const SampleRecord& r : records) ++c[static_cast<std::size_t>(r.type)];
  return c;
}

BBox estimate_target(const TrackerState& state, const std::vector<SampleRecord>& records) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].type == SampleType::kI) idx.push_back(i);
  }
  if (idx.empty()) throw Error("estimate_target: no Type I samples");
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].score > records[b].score; });
  idx.resize(std::min(idx.size(), state.config.top_n));
  double total = 0.0;
  for (std::size_t i : idx) total += records[i].score;
  std::array<double, 4> acc{};
  for (std::size_t i : idx) {
    const double w = total > 0.0 ? records[i].score / total : 1.0 / static_cast<double>(idx.size());
    const BBox refined = apply_regressors(state.regressors, records[i].features, records[i].box);
    acc[0] += w * refined.x;
    acc[1] += w * refined.y;
    acc[2] += w * refined.w;
    acc[3] += w * refined.h;
  }
  return {acc[0], acc[1], acc[2], acc[3]};
}

AdaptResult adapt(TrackerState& state, std::vector<SampleRecord>& records) {
  AdaptResult res;
  if (records.empty()) throw Error("adapt: no records");
  auto ratio = [&records] {
    const auto c = type_counts(records);
    return static_cast<double>(c[1] + c[2]) / static_cast<double>(records.size());
  };
  double current = ratio();
  res.as_ratio_trace.push_back(current);
  if (!state.config.adapt) {
    res.stop = StopReason::kDisabled;
    return res;
  }
  if (current <= state.config.as_threshold) {
    res.stop = StopReason::kBelowThreshold;
    return res;
  }
  for (const SampleRecord& r : records) push_pool(state, r);
  if (state.pool.empty()) {
    log_line(LogLevel::kInfo, "warning: adaptation skipped, consistent-sample pool is empty");
    res.stop = StopReason::kPoolEmpty;
    return res;
  }
  const int x_label = state.model.category_x().index;
  Rng rng = stage_rng(state, "adapt/" + std::to_string(state.frame_index));
  while (true) {
    std::vector<bool> was_ambiguous(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) was_ambiguous[i] = ambiguous(records[i].type);

    fit_on_pool(branch_of(state), state.pool, kForeground, kBackground, state.config.adapt_fit, rng);
    if (state.config.use_netc) {
      fit_on_pool(state.model.net_c, state.pool, state.active.index, x_label, state.config.adapt_fit, rng);
    }
    rescore(state, records);
    ++res.rounds;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (was_ambiguous[i]) push_pool(state, records[i]);
    }
    const double next = ratio();
    res.as_ratio_trace.push_back(next);
    if (next <= state.config.as_threshold) {
      res.stop = StopReason::kBelowThreshold;
      break;
    }
    if (next >= current) {
      res.stop = StopReason::kNotDecreasing;
      break;
    }
    if (res.rounds >= state.config.max_rounds) {
      res.stop = StopReason::kMaxRounds;
      break;
    }
    current = next;
  }
  return res;
}

std::vector<BBox> TrackResult::estimates() const {
  std::vector<BBox> out;
  out.reserve(frames.size());
  for (const FrameResult& f : frames) out.push_back(f.estimate);
  return out;
}

nlohmann::ordered_json TrackResult::to_json(const ModelBundle& model) const {
  nlohmann::ordered_json j;
  j["active_category"] = active_category;
  nlohmann::ordered_json votes = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < vote_counts.size() && i < model.labels.size(); ++i) {
    votes[model.labels[i].name] = vote_counts[i];
  }
  j["vote_counts"] = votes;
  j["low_confidence"] = low_confidence;
  j["gt_fg_before"] = gt_fg_before;
  j["gt_fg_after"] = gt_fg_after;
  nlohmann::ordered_json fr = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const FrameResult& f = frames[k];
    nlohmann::ordered_json e;
    e["frame"] = k;
    e["estimate"] = {f.estimate.left(), f.estimate.top(), f.estimate.w, f.estimate.h};
    e["scored"] = f.scored;
    e["lost"] = f.lost;
    e["types"] = {{"I", f.type_counts[0]}, {"II", f.type_counts[1]}, {"III", f.type_counts[2]}, {"IV", f.type_counts[3]}};
    e["adaptation_rounds"] = f.adaptation_rounds;
    e["as_ratio_trace"] = f.as_ratio_trace;
    e["stop"] = to_string(f.stop);
    if (!f.error.empty()) e["error"] = f.error;
    fr.push_back(std::move(e));
  }
  j["frames"] = std::move(fr);
  return j;
}

TrackResult track_sequence(const ModelBundle& model, const Sequence& sequence, const BBox& first_gt,
                           const TrackerConfig& config, const FrameObserver& observe) {
  if (sequence.size() < 2) throw Error("track_sequence(" + sequence.name + "): need at least 2 frames");
  TrackerState state = initialize(model, sequence.frame(0), first_gt, config,
                                  make_rng(config.seed, "track/" + sequence.name));
  TrackResult out;
  out.active_category = state.active.name;
  out.vote_counts = state.vote_counts;
  out.low_confidence = state.low_confidence;
  out.gt_fg_before = state.gt_fg_before;
  out.gt_fg_after = state.gt_fg_after;
  FrameResult first;
  first.estimate = first_gt;
  out.frames.push_back(std::move(first));

  for (std::size_t k = 1; k < sequence.size(); ++k) {
    const FrameImage& frame = sequence.frame(k);
    state.frame_index = k;
    FrameResult fr;
    fr.scored = true;
    fr.estimate = state.last_estimate;
    try {
      std::vector<SampleRecord> records = score_candidates(state, frame);
      fr.type_counts = type_counts(records);
      if (observe) observe(k, records);
      if (fr.type_counts[0] == 0) {
        fr.lost = true;
      } else {
        fr.estimate = clamp_to_frame(estimate_target(state, records), frame);
      }
      const AdaptResult a = adapt(state, records);
      fr.adaptation_rounds = a.rounds;
      fr.as_ratio_trace = a.as_ratio_trace;
      fr.stop = a.stop;
    } catch (const Error& e) {
      fr.error = e.what();
      log_line(LogLevel::kInfo, sequence.name + " frame " + std::to_string(k) + ": " + fr.error);
    }
    state.last_estimate = fr.estimate;
    out.frames.push_back(std::move(fr));
  }
  return out;
}

}  // namespace semtrack

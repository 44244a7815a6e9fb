#pragma once

// One-pass evaluation: per-frame overlap, success curves over an overlap
// threshold grid, their AUC, and attribute-sliced summaries.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "semtrack/attributes.hpp"
#include "semtrack/regions.hpp"

namespace semtrack {

std::vector<double> overlap_series(std::span<const BBox> pred, std::span<const BBox> gt);

// 0, 0.05, ..., 1 (21 points).
std::vector<double> default_threshold_grid();

struct SuccessCurve {
  std::vector<double> thresholds;
  std::vector<double> ratios;  // share of frames with overlap strictly above each threshold
  double auc = 0.0;            // mean ratio over thresholds below 1
};

SuccessCurve success_curve(std::span<const double> overlaps, std::span<const double> grid);

struct SequenceEval {
  std::string name;
  std::vector<double> overlaps;
  SuccessCurve curve;
  std::vector<AttributeTag> tags;

  double mean_overlap() const;
};

SequenceEval evaluate_sequence(const std::string& name, std::span<const BBox> pred, std::span<const BBox> gt,
                               std::vector<AttributeTag> tags, std::span<const double> grid);

struct AttributeEntry {
  std::size_t sequences = 0;
  std::optional<double> auc;  // absent when no sequence carries the tag
};

struct AttributeReport {
  double overall_auc = 0.0;
  double mean_overlap = 0.0;
  std::map<AttributeTag, AttributeEntry> attributes;  // every code
};

AttributeReport attribute_report(std::span<const SequenceEval> sequences);
// Tag codes as strings; unknown codes are rejected.
AttributeReport attribute_report(std::span<const SequenceEval> sequences,
                                 const std::map<std::string, std::vector<std::string>>& tags);

// Per-threshold mean of the sequence success ratios.
SuccessCurve mean_curve(std::span<const SequenceEval> sequences);

nlohmann::ordered_json report_json(std::span<const SequenceEval> sequences, const AttributeReport& report);
// "threshold,ratio" header plus one row per threshold of the mean curve.
std::string curve_csv(const SuccessCurve& curve);

}  // namespace semtrack

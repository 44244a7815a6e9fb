#include "semtrack/eval.hpp"

#include <cmath>
#include <numeric>

#include "semtrack/error.hpp"

namespace semtrack {

std::vector<double> overlap_series(std::span<const BBox> pred, std::span<const BBox> gt) {
  if (pred.size() != gt.size()) {
    throw Error("overlap_series: " + std::to_string(pred.size()) + " predictions for " +
                std::to_string(gt.size()) + " ground-truth boxes");
  }
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = iou(pred[i], gt[i]);
  return out;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> g(21);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i) / 20.0;
  return g;
}

SuccessCurve success_curve(std::span<const double> overlaps, std::span<const double> grid) {
  if (overlaps.empty()) throw Error("success_curve: no overlaps");
  if (grid.empty()) throw Error("success_curve: empty threshold grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0) || (i > 0 && !(grid[i] > grid[i - 1]))) {
      throw Error("success_curve: grid must be strictly ascending within [0, 1]");
    }
  }
  SuccessCurve c;
  c.thresholds.assign(grid.begin(), grid.end());
  const double n = static_cast<double>(overlaps.size());
  double sum = 0.0;
  std::size_t counted = 0;
  for (double t : grid) {
    const auto above = std::count_if(overlaps.begin(), overlaps.end(), [t](double o) { return o > t; });
    c.ratios.push_back(static_cast<double>(above) / n);
    if (t < 1.0) {
      sum += c.ratios.back();
      ++counted;
    }
  }
  c.auc = counted ? sum / static_cast<double>(counted) : 0.0;
  return c;
}

double SequenceEval::mean_overlap() const {
  return overlaps.empty() ? 0.0
                          : std::accumulate(overlaps.begin(), overlaps.end(), 0.0) / static_cast<double>(overlaps.size());
}

SequenceEval evaluate_sequence(const std::string& name, std::span<const BBox> pred, std::span<const BBox> gt,
                               std::vector<AttributeTag> tags, std::span<const double> grid) {
  SequenceEval e;
  e.name = name;
  e.overlaps = overlap_series(pred, gt);
  e.curve = success_curve(e.overlaps, grid);
  e.tags = std::move(tags);
  return e;
}

AttributeReport attribute_report(std::span<const SequenceEval> sequences) {
  AttributeReport r;
  for (AttributeTag t : kAllAttributes) r.attributes[t] = {};
  if (sequences.empty()) return r;
  std::map<AttributeTag, double> sums;
  for (const SequenceEval& s : sequences) {
    r.overall_auc += s.curve.auc;
    r.mean_overlap += s.mean_overlap();
    for (AttributeTag t : s.tags) {
      ++r.attributes[t].sequences;
      sums[t] += s.curve.auc;
    }
  }
  r.overall_auc /= static_cast<double>(sequences.size());
  r.mean_overlap /= static_cast<double>(sequences.size());
  for (auto& [tag, entry] : r.attributes) {
    if (entry.sequences) entry.auc = sums[tag] / static_cast<double>(entry.sequences);
  }
  return r;
}

AttributeReport attribute_report(std::span<const SequenceEval> sequences,
                                 const std::map<std::string, std::vector<std::string>>& tags) {
  std::vector<SequenceEval> tagged(sequences.begin(), sequences.end());
  for (SequenceEval& s : tagged) {
    s.tags.clear();
    const auto it = tags.find(s.name);
    if (it == tags.end()) continue;
    for (const std::string& code : it->second) {
      const auto t = parse_attribute(code);
      if (!t) throw Error("attribute_report: unknown attribute code '" + code + "'");
      if (std::find(s.tags.begin(), s.tags.end(), *t) == s.tags.end()) s.tags.push_back(*t);
    }
  }
  return attribute_report(tagged);
}

SuccessCurve mean_curve(std::span<const SequenceEval> sequences) {
  if (sequences.empty()) throw Error("mean_curve: no sequences");
  SuccessCurve c;
  c.thresholds = sequences.front().curve.thresholds;
  c.ratios.assign(c.thresholds.size(), 0.0);
  for (const SequenceEval& s : sequences) {
    if (s.curve.thresholds != c.thresholds) throw Error("mean_curve: sequences use different grids");
    for (std::size_t i = 0; i < c.ratios.size(); ++i) c.ratios[i] += s.curve.ratios[i];
    c.auc += s.curve.auc;
  }
  const double n = static_cast<double>(sequences.size());
  for (double& r : c.ratios) r /= n;
  c.auc /= n;
  return c;
}

nlohmann::ordered_json report_json(std::span<const SequenceEval> sequences, const AttributeReport& report) {
  nlohmann::ordered_json j;
  j["overall_auc"] = report.overall_auc;
  j["mean_overlap"] = report.mean_overlap;
  j["sequences"] = nlohmann::ordered_json::array();
  for (const SequenceEval& s : sequences) {
    nlohmann::ordered_json e;
    e["name"] = s.name;
    e["frames"] = s.overlaps.size();
    e["auc"] = s.curve.auc;
    e["mean_overlap"] = s.mean_overlap();
    nlohmann::ordered_json tags = nlohmann::ordered_json::array();
    for (AttributeTag t : s.tags) tags.push_back(std::string(to_string(t)));
    e["tags"] = tags;
    j["sequences"].push_back(std::move(e));
  }
  nlohmann::ordered_json attrs = nlohmann::ordered_json::object();
  for (const auto& [tag, entry] : report.attributes) {
    if (!entry.auc) continue;
    attrs[std::string(to_string(tag))] = {{"sequences", entry.sequences}, {"auc", *entry.auc}};
  }
  j["attributes"] = attrs;
  return j;
}

std::string curve_csv(const SuccessCurve& curve) {
  std::string out = "threshold,ratio\n";
  char line[64];
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.2f,%.6f\n", curve.thresholds[i], curve.ratios[i]);
    out += line;
  }
  return out;
}

}  // namespace semtrack

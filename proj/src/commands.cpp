#include "semtrack/commands.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "semtrack/error.hpp"
#include "semtrack/eval.hpp"
#include "semtrack/log.hpp"

namespace semtrack {

namespace fs = std::filesystem;

namespace {

std::vector<ShapeKind> parse_shapes(const KvConfig& kv, const std::string& key, std::vector<ShapeKind> current) {
  if (!kv.has(key)) return current;
  std::vector<std::string> names;
  kv.get(key, names);
  std::vector<ShapeKind> out;
  for (const std::string& n : names) {
    const auto s = parse_shape(n);
    if (!s) throw Error(key + ": unknown shape '" + n + "'");
    out.push_back(*s);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(path.string() + ": cannot open for writing");
  f << text;
  if (!f) throw Error(path.string() + ": write failed");
}

void require(const fs::path& p, const char* flag) {
  if (p.empty()) throw Error(std::string("missing required option ") + flag);
}

}  // namespace

void apply_dataset_config(const KvConfig& kv, DatasetSpec& d) {
  d.categories = parse_shapes(kv, "data.categories", d.categories);
  d.x_shapes = parse_shapes(kv, "data.x_shapes", d.x_shapes);
  kv.get("data.category_x", d.category_x_name);
  kv.get("data.train_per_category", d.train_per_category);
  kv.get("data.x_train_sequences", d.x_train_sequences);
  kv.get("data.test_sequences", d.test_sequences);
  kv.get("data.train_frames", d.train_frames);
  kv.get("data.test_frames", d.test_frames);
  kv.get("data.width", d.width);
  kv.get("data.height", d.height);
  kv.get("data.distractors", d.distractors);
  kv.get("data.distractor_color_match", d.distractor_color_match);
  kv.get("data.test_illuminant_shift", d.test_illuminant_shift);
  kv.get("data.test_target_tint", d.test_target_tint);
  kv.get("data.test_crossers", d.test_crossers);
}

RunSettings resolve_settings(const RunOptions& o) {
  RunSettings s;
  s.train = TrainConfig::desk();
  s.track = TrackerConfig::desk();
  if (o.config) {
    const KvConfig kv = KvConfig::load(*o.config);
    kv.get("seed", s.seed);
    apply_dataset_config(kv, s.dataset);
    s.train.apply(kv);
    s.track.apply(kv);
    kv.check_all_used();
  }
  if (o.seed) s.seed = *o.seed;
  if (o.no_adapt) s.track.adapt = false;
  if (o.no_netc) s.track.use_netc = false;
  if (o.branch_override) s.track.branch_override = o.branch_override;
  s.dataset.seed = s.train.seed = s.track.seed = s.seed;
  return s;
}

CommandResult cmd_gen(const RunOptions& o) {
  CommandResult r;
  const RunSettings s = resolve_settings(o);
  const DatasetPlan plan = plan_dataset(s.dataset);
  for (const auto& [part, specs] : {std::pair{"train", &plan.train}, std::pair{"test", &plan.test}}) {
    for (const SynthSpec& spec : *specs) {
      try {
        write_sequence(generate_synthetic(spec), o.out / part / spec.name);
      } catch (const Error& e) {
        r.errors.push_back(spec.name + ": " + e.what());
      }
    }
  }
  log_line(LogLevel::kInfo, "gen: " + std::to_string(plan.train.size()) + " training and " +
                                std::to_string(plan.test.size()) + " test sequences in " + o.out.string());
  return r;
}

CommandResult cmd_train(const RunOptions& o) {
  require(o.data, "--data");
  const RunSettings s = resolve_settings(o);
  const std::vector<fs::path> dirs = list_sequence_dirs(o.data);
  if (dirs.empty()) throw Error(o.data.string() + ": no sequences found");

  SequenceSource source;
  for (const fs::path& dir : dirs) {
    const SequenceInfo info = read_sequence_info(dir);
    if (!info.category) throw Error(dir.string() + ": training sequences need a category");
    source.categories.push_back(*info.category);
  }
  source.load = [dirs](std::size_t i) { return load_sequence(dirs[i]); };

  TrainReport report;
  const ModelBundle model = train_offline(source, s.train, report);
  ensure_directory(o.out);
  save_model(model, o.out / "model.bin");
  write_text(o.out / "train_report.json", report.to_json().dump(2) + "\n");

  CommandResult r;
  for (const HeadReport& h : report.branches) {
    log_line(LogLevel::kInfo, "train: " + h.name + " holdout accuracy " + std::to_string(h.holdout_accuracy));
  }
  return r;
}

CommandResult cmd_track(const RunOptions& o) {
  require(o.data, "--data");
  require(o.model, "--model");
  const RunSettings s = resolve_settings(o);
  const ModelBundle model = load_model(o.model);
  if (s.track.branch_override) model.label(*s.track.branch_override);  // validate before any work

  CommandResult r;
  nlohmann::ordered_json diag;
  diag["seed"] = s.seed;
  diag["use_netc"] = s.track.use_netc;
  diag["adapt"] = s.track.adapt;
  diag["branch_override"] = s.track.branch_override ? nlohmann::ordered_json(*s.track.branch_override) : nullptr;
  nlohmann::ordered_json seqs = nlohmann::ordered_json::object();
  for (const fs::path& dir : list_sequence_dirs(o.data)) {
    const std::string name = dir.filename().string();
    try {
      const Sequence seq = load_sequence(dir);
      const TrackResult result = track_sequence(model, seq, seq.gt.front(), s.track);
      write_results(seq.name, result.estimates(), o.out / "results" / (seq.name + ".txt"));
      seqs[seq.name] = result.to_json(model);
      for (std::size_t k = 0; k < result.frames.size(); ++k) {
        if (!result.frames[k].error.empty()) {
          r.errors.push_back(seq.name + " frame " + std::to_string(k) + ": " + result.frames[k].error);
        }
      }
      log_line(LogLevel::kInfo, "track: " + seq.name + " as " + result.active_category);
    } catch (const Error& e) {
      r.errors.push_back(name + ": " + e.what());
      seqs[name] = {{"error", e.what()}};
    }
  }
  diag["sequences"] = std::move(seqs);
  diag["errors"] = r.errors;
  write_text(o.out / "diagnostics.json", diag.dump(2) + "\n");
  return r;
}

CommandResult cmd_eval(const RunOptions& o) {
  require(o.data, "--data");
  require(o.results, "--results");
  resolve_settings(o);
  CommandResult r;
  const std::vector<double> grid = default_threshold_grid();
  std::vector<SequenceEval> evals;
  for (const fs::path& dir : list_sequence_dirs(o.data)) {
    const std::string name = dir.filename().string();
    try {
      const SequenceInfo info = read_sequence_info(dir);
      const fs::path result_path = o.results / (info.name + ".txt");
      if (!fs::exists(result_path)) throw Error("missing result file " + result_path.string());
      const std::vector<BBox> pred = read_boxes(result_path);
      if (pred.size() != info.gt.size()) {
        throw Error(result_path.string() + ": " + std::to_string(pred.size()) + " boxes for " +
                    std::to_string(info.gt.size()) + " frames");
      }
      evals.push_back(evaluate_sequence(info.name, pred, info.gt, info.tags, grid));
    } catch (const Error& e) {
      r.errors.push_back(name + ": " + e.what());
    }
  }
  if (evals.empty()) {
    r.errors.push_back("no sequence could be evaluated");
    return r;
  }
  const AttributeReport report = attribute_report(evals);
  nlohmann::ordered_json j = report_json(evals, report);
  j["errors"] = r.errors;
  write_text(o.out / "report.json", j.dump(2) + "\n");
  write_text(o.out / "success.csv", curve_csv(mean_curve(evals)));
  return r;
}

}  // namespace semtrack

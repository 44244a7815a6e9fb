#pragma once

// The four pipeline commands behind the command-line tool. Settings resolve
// as built-in desk defaults, then the config file, then explicit flags.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semtrack/kv_config.hpp"
#include "semtrack/synthetic.hpp"
#include "semtrack/track.hpp"
#include "semtrack/train.hpp"

namespace semtrack {

inline constexpr std::uint64_t kDefaultSeed = 7;

struct RunOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = ".";
  std::filesystem::path data;     // train/track: sequence root; eval: ground-truth root
  std::filesystem::path model;    // track
  std::filesystem::path results;  // eval: folder of <sequence>.txt files
  bool no_adapt = false;
  bool no_netc = false;
  std::optional<std::string> branch_override;
};

struct RunSettings {
  std::uint64_t seed = kDefaultSeed;
  DatasetSpec dataset;
  TrainConfig train;
  TrackerConfig track;
};

// Reads "data.*" keys.
void apply_dataset_config(const KvConfig& kv, DatasetSpec& spec);

// Every key of the config file must belong to some section, whichever
// command is running.
RunSettings resolve_settings(const RunOptions& options);

struct CommandResult {
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

// <out>/train/<name>, <out>/test/<name>.
CommandResult cmd_gen(const RunOptions& options);
// <out>/model.bin, <out>/train_report.json.
CommandResult cmd_train(const RunOptions& options);
// <out>/results/<name>.txt per sequence, <out>/diagnostics.json.
CommandResult cmd_track(const RunOptions& options);
// <out>/report.json, <out>/success.csv.
CommandResult cmd_eval(const RunOptions& options);

}  // namespace semtrack

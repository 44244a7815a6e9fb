#pragma once

// OTB-style sequence directories:
//
//   <dir>/img/0001.ppm ...        zero-padded numbered frames (.ppm or .png)
//   <dir>/groundtruth_rect.txt    one "x,y,w,h" corner box per frame; commas,
//                                 tabs or spaces separate the fields
//   <dir>/meta.json               optional {"name", "category", "tags"}

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semtrack/attributes.hpp"
#include "semtrack/regions.hpp"

namespace semtrack {

struct Sequence {
  std::string name;
  std::vector<std::shared_ptr<const FrameImage>> frames;
  std::vector<BBox> gt;  // centre format; empty when unannotated
  std::optional<std::string> category;
  std::vector<AttributeTag> tags;

  std::size_t size() const { return frames.size(); }
  const FrameImage& frame(std::size_t i) const { return *frames.at(i); }
};

inline constexpr const char* kGroundTruthFile = "groundtruth_rect.txt";
inline constexpr const char* kImageDir = "img";
inline constexpr const char* kMetaFile = "meta.json";

// create_directories that reports failures as Error.
void ensure_directory(const std::filesystem::path& dir);

// Corner-format box file -> centre-format boxes. Errors carry file:line.
std::vector<BBox> read_boxes(const std::filesystem::path& path);
// Centre-format boxes -> "x,y,w,h" corner lines (shortest round-trip
// decimal representation).
void write_boxes(std::span<const BBox> boxes, const std::filesystem::path& path);

// Everything but the frames: ground truth and meta.json contents.
struct SequenceInfo {
  std::string name;
  std::vector<BBox> gt;
  std::optional<std::string> category;
  std::vector<AttributeTag> tags;
};

SequenceInfo read_sequence_info(const std::filesystem::path& dir);
Sequence load_sequence(const std::filesystem::path& dir);
void write_sequence(const Sequence& seq, const std::filesystem::path& dir);

// Every immediate subdirectory of `root` that holds a ground-truth file,
// in name order.
std::vector<std::filesystem::path> list_sequence_dirs(const std::filesystem::path& root);

// Tracker output: one corner-format line per frame.
void write_results(const std::string& sequence_name, std::span<const BBox> estimates,
                   const std::filesystem::path& path);

}  // namespace semtrack

#include "semtrack/sequence.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "semtrack/error.hpp"
#include "semtrack/image_io.hpp"

namespace semtrack {

namespace fs = std::filesystem;

std::string_view to_string(AttributeTag tag) {
  switch (tag) {
    case AttributeTag::IV: return "IV";
    case AttributeTag::OPR: return "OPR";
    case AttributeTag::SV: return "SV";
    case AttributeTag::OCC: return "OCC";
    case AttributeTag::DEF: return "DEF";
    case AttributeTag::MB: return "MB";
    case AttributeTag::FM: return "FM";
    case AttributeTag::IPR: return "IPR";
    case AttributeTag::OV: return "OV";
    case AttributeTag::BC: return "BC";
    case AttributeTag::LR: return "LR";
  }
  return "?";
}

std::optional<AttributeTag> parse_attribute(std::string_view code) {
  for (AttributeTag t : kAllAttributes) {
    if (to_string(t) == code) return t;
  }
  return std::nullopt;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<BBox> read_boxes(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError(path.string() + ": cannot open box file");
  std::vector<BBox> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    for (char& c : line) {
      if (c == ',' || c == '\t') c = ' ';
    }
    std::istringstream in(line);
    double v[4];
    std::string extra;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    for (double& x : v) {
      std::string tok;
      if (!(in >> tok)) throw FormatError(where + ": expected 4 values");
      const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) {
        throw FormatError(where + ": cannot parse '" + tok + "' as a number");
      }
    }
    if (in >> extra) throw FormatError(where + ": more than 4 values");
    if (!(v[2] > 0.0 && v[3] > 0.0)) throw FormatError(where + ": box width and height must be positive");
    out.push_back(BBox::from_corner(v[0], v[1], v[2], v[3]));
  }
  return out;
}

void write_boxes(std::span<const BBox> boxes, const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(path.string() + ": cannot open for writing");
  for (const BBox& b : boxes) {
    f << format_double(b.left()) << ',' << format_double(b.top()) << ',' << format_double(b.w) << ','
      << format_double(b.h) << '\n';
  }
  if (!f) throw Error(path.string() + ": write failed");
}

SequenceInfo read_sequence_info(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(dir.string() + ": not a directory");
  SequenceInfo info;
  info.name = dir.filename().string();
  const fs::path gt_path = dir / kGroundTruthFile;
  if (!fs::exists(gt_path)) throw FormatError(gt_path.string() + ": missing ground-truth file");
  info.gt = read_boxes(gt_path);

  const fs::path meta_path = dir / kMetaFile;
  if (fs::exists(meta_path)) {
    std::ifstream f(meta_path);
    try {
      const nlohmann::json meta = nlohmann::json::parse(f);
      if (meta.contains("name")) info.name = meta.at("name").get<std::string>();
      if (meta.contains("category") && !meta.at("category").is_null()) {
        info.category = meta.at("category").get<std::string>();
      }
      for (const auto& t : meta.value("tags", nlohmann::json::array())) {
        const auto tag = parse_attribute(t.get<std::string>());
        if (!tag) throw FormatError(meta_path.string() + ": unknown attribute tag " + t.dump());
        info.tags.push_back(*tag);
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(meta_path.string() + ": " + e.what());
    }
  }
  return info;
}

Sequence load_sequence(const fs::path& dir) {
  SequenceInfo info = read_sequence_info(dir);
  Sequence seq;
  seq.name = std::move(info.name);
  seq.gt = std::move(info.gt);
  seq.category = std::move(info.category);
  seq.tags = std::move(info.tags);

  const fs::path img_dir = dir / kImageDir;
  if (!fs::is_directory(img_dir)) throw FormatError(img_dir.string() + ": missing image folder");
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(img_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ppm" || ext == ".png") images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());
  if (images.size() != seq.gt.size()) {
    throw FormatError(dir.string() + ": " + std::to_string(images.size()) + " frames but " +
                      std::to_string(seq.gt.size()) + " ground-truth boxes");
  }
  if (images.size() < 2) throw FormatError(dir.string() + ": a sequence needs at least 2 frames");
  for (const fs::path& p : images) seq.frames.push_back(std::make_shared<const FrameImage>(read_image(p)));
  return seq;
}

void write_sequence(const Sequence& seq, const fs::path& dir) {
  if (seq.frames.size() != seq.gt.size()) throw Error("write_sequence: frame and box counts differ");
  ensure_directory(dir / kImageDir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.ppm", i + 1);
    write_ppm(*seq.frames[i], dir / kImageDir / name);
  }
  write_boxes(seq.gt, dir / kGroundTruthFile);
  nlohmann::json meta;
  meta["name"] = seq.name;
  meta["category"] = seq.category ? nlohmann::json(*seq.category) : nlohmann::json(nullptr);
  nlohmann::json tags = nlohmann::json::array();
  for (AttributeTag t : seq.tags) tags.push_back(std::string(to_string(t)));
  meta["tags"] = tags;
  std::ofstream(dir / kMetaFile) << meta.dump(2) << '\n';
}

std::vector<fs::path> list_sequence_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw FormatError(root.string() + ": not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / kGroundTruthFile)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_results(const std::string& sequence_name, std::span<const BBox> estimates, const fs::path& path) {
  if (estimates.empty()) throw Error("write_results: no estimates for sequence '" + sequence_name + "'");
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  write_boxes(estimates, path);
}

}  // namespace semtrack

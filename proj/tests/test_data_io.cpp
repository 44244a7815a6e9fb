#include <algorithm>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "semtrack/error.hpp"
#include "semtrack/image_io.hpp"
#include "semtrack/sequence.hpp"
#include "semtrack/synthetic.hpp"

using namespace semtrack;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("semtrack_test_data_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Sub-pixel tight box of a coverage map from its row and column profiles.
BBox tight_box(const std::vector<float>& alpha, std::size_t w, std::size_t h) {
  std::vector<double> col(w, 0.0), row(h, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      col[x] = std::max(col[x], static_cast<double>(alpha[y * w + x]));
      row[y] = std::max(row[y], static_cast<double>(alpha[y * w + x]));
    }
  auto extent = [](const std::vector<double>& p, double& lo, double& hi) {
    std::size_t a = 0, b = p.size() - 1;
    while (a < p.size() && p[a] == 0.0) ++a;
    while (b > 0 && p[b] == 0.0) --b;
    lo = static_cast<double>(a) + 1.0 - p[a];
    hi = static_cast<double>(b) + p[b];
  };
  double l, r, t, bt;
  extent(col, l, r);
  extent(row, t, bt);
  return BBox::from_corner(l, t, r - l, bt - t);
}

bool same_pixels(const FrameImage& a, const FrameImage& b) {
  return a.width() == b.width() && a.height() == b.height() &&
         std::ranges::equal(a.pixels(), b.pixels());
}

SynthSpec base_spec(ShapeKind shape) {
  SynthSpec s;
  s.shape = shape;
  s.frames = 12;
  s.width = 96;
  s.height = 80;
  s.start_x = 40.3;
  s.start_y = 37.8;
  s.target_w = 28.4;
  s.target_h = 24.6;
  s.vx = 1.7;
  s.vy = -0.9;
  s.scale_drift = 0.01;
  s.distractors = 2;
  s.seed = 11;
  return s;
}

}  // namespace

TEST_CASE("box files round-trip through write and read") {
  const fs::path dir = scratch_dir("roundtrip");
  Rng rng(5);
  std::vector<BBox> boxes;
  for (int i = 0; i < 200; ++i) {
    boxes.push_back({uniform(rng, -20, 300), uniform(rng, -20, 300), uniform(rng, 1, 120), uniform(rng, 1, 120)});
  }
  write_boxes(boxes, dir / "gt.txt");
  const auto back = read_boxes(dir / "gt.txt");
  REQUIRE(back.size() == boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    CHECK(std::abs(back[i].x - boxes[i].x) < 1e-9);
    CHECK(std::abs(back[i].y - boxes[i].y) < 1e-9);
    CHECK(std::abs(back[i].w - boxes[i].w) < 1e-9);
    CHECK(std::abs(back[i].h - boxes[i].h) < 1e-9);
  }
}

TEST_CASE("tab, comma and space separated boxes parse identically") {
  const fs::path dir = scratch_dir("separators");
  write_text(dir / "comma.txt", "10,20,30,40\n1.5,2.5,3.5,4.5\n");
  write_text(dir / "tab.txt", "10\t20\t30\t40\n1.5\t2.5\t3.5\t4.5\n");
  write_text(dir / "space.txt", "10 20 30 40\r\n1.5  2.5 3.5 4.5\r\n");
  const auto a = read_boxes(dir / "comma.txt");
  CHECK(a == read_boxes(dir / "tab.txt"));
  CHECK(a == read_boxes(dir / "space.txt"));
  REQUIRE(a.size() == 2);
  CHECK(a[0] == BBox{25, 40, 30, 40});
}

TEST_CASE("malformed box files are rejected with the line number") {
  const fs::path dir = scratch_dir("malformed");
  write_text(dir / "bad.txt", "1,2,3,4\n1,2,x,4\n");
  try {
    read_boxes(dir / "bad.txt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("bad.txt:2") != std::string::npos);
  }
  write_text(dir / "short.txt", "1,2,3\n");
  CHECK_THROWS_AS(read_boxes(dir / "short.txt"), Error);
  write_text(dir / "negative.txt", "1,2,-3,4\n");
  CHECK_THROWS_AS(read_boxes(dir / "negative.txt"), Error);
  CHECK_THROWS_AS(read_boxes(dir / "missing.txt"), Error);
}

TEST_CASE("ppm round trip is exact for 8-bit values") {
  const fs::path dir = scratch_dir("ppm");
  std::vector<float> rgb(7 * 5 * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<float>((i * 37) % 256 / 255.0);
  const FrameImage img(7, 5, rgb);
  write_ppm(img, dir / "a.ppm");
  const FrameImage back = read_image(dir / "a.ppm");
  CHECK(back.width() == 7);
  CHECK(back.height() == 5);
  CHECK(same_pixels(back, img));
  write_text(dir / "bad.ppm", "P3\n1 1\n255\n0 0 0\n");
  CHECK_THROWS_AS(read_ppm(dir / "bad.ppm"), Error);
  CHECK_THROWS_AS(read_image(dir / "a.bmp"), Error);
}

TEST_CASE("sequence directories load back what was written") {
  const fs::path dir = scratch_dir("sequence");
  SynthSpec spec = base_spec(ShapeKind::kDisk);
  spec.occluder = true;
  spec.brightness_end = 0.8;
  const Sequence seq = generate_synthetic(spec);
  write_sequence(seq, dir / "disk");
  const Sequence back = load_sequence(dir / "disk");
  CHECK(back.name == seq.name);
  CHECK(back.category == seq.category);
  CHECK(back.tags == seq.tags);
  REQUIRE(back.size() == seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    CHECK(same_pixels(back.frame(i), seq.frame(i)));
    CHECK(std::abs(back.gt[i].x - seq.gt[i].x) < 1e-9);
    CHECK(std::abs(back.gt[i].w - seq.gt[i].w) < 1e-9);
  }
  CHECK(list_sequence_dirs(dir) == std::vector<fs::path>{dir / "disk"});

  // One box too many.
  std::ofstream(dir / "disk" / kGroundTruthFile, std::ios::app) << "1,1,5,5\n";
  CHECK_THROWS_AS(load_sequence(dir / "disk"), Error);
  fs::remove(dir / "disk" / kGroundTruthFile);
  CHECK_THROWS_AS(load_sequence(dir / "disk"), Error);
}

TEST_CASE("synthetic generation is deterministic and tags follow the perturbations") {
  const SynthSpec spec = base_spec(ShapeKind::kTriangle);
  const Sequence a = generate_synthetic(spec);
  const Sequence b = generate_synthetic(spec);
  REQUIRE(a.size() == spec.frames);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_pixels(a.frame(i), b.frame(i)));
  CHECK(a.category == std::optional<std::string>("triangle"));
  CHECK(a.tags == std::vector<AttributeTag>{AttributeTag::SV});

  SynthSpec other = spec;
  other.seed = 12;
  CHECK_FALSE(same_pixels(generate_synthetic(other).frame(0), a.frame(0)));

  SynthSpec x = spec;
  x.shape = ShapeKind::kRing;
  x.category = "X";
  x.brightness_end = 1.3;
  x.occluder = true;
  x.scale_drift = 0.0;
  const Sequence xs = generate_synthetic(x);
  CHECK(xs.category == std::optional<std::string>("X"));
  CHECK(xs.tags == std::vector<AttributeTag>{AttributeTag::IV, AttributeTag::OCC});
}

TEST_CASE("zero motion gives a constant ground truth") {
  SynthSpec spec = base_spec(ShapeKind::kSquare);
  spec.vx = spec.vy = 0.0;
  spec.scale_drift = 0.0;
  const Sequence seq = generate_synthetic(spec);
  for (const BBox& b : seq.gt) CHECK(b == seq.gt.front());
}

TEST_CASE("rendered targets fill their ground-truth boxes") {
  for (ShapeKind shape : {ShapeKind::kSquare, ShapeKind::kDisk, ShapeKind::kTriangle, ShapeKind::kCross,
                          ShapeKind::kRing}) {
    CAPTURE(to_string(shape));
    SynthSpec spec = base_spec(shape);
    spec.motion = MotionKind::kSinusoidal;
    spec.amplitude_x = 6.0;
    spec.period = 7.0;
    const Sequence seq = generate_synthetic(spec);
    for (std::size_t k = 0; k < spec.frames; ++k) {
      const auto alpha = rasterize_target(spec, k);
      const BBox& gt = seq.gt[k];
      double covered = 0.0;
      for (std::size_t y = 0; y < spec.height; ++y)
        for (std::size_t x = 0; x < spec.width; ++x) covered += alpha[y * spec.width + x];
      CHECK(covered / gt.area() >= 0.5);
      CHECK(iou(tight_box(alpha, spec.width, spec.height), gt) >= 0.95);
    }
  }
}

TEST_CASE("targets leaving the frame are rejected") {
  SynthSpec spec = base_spec(ShapeKind::kSquare);
  spec.vx = 8.0;
  spec.frames = 20;
  CHECK_THROWS_AS(generate_synthetic(spec), InfeasibleError);
  spec.frames = 1;
  CHECK_THROWS_AS(generate_synthetic(spec), Error);
}

TEST_CASE("dataset plan covers every category and tags held-out sequences") {
  DatasetSpec d;
  d.train_per_category = 2;
  d.x_train_sequences = 2;
  d.test_sequences = 4;
  const DatasetPlan plan = plan_dataset(d);
  CHECK(plan.train.size() == 8);
  CHECK(plan.test.size() == 4);
  for (const SynthSpec& s : plan.test) {
    const auto tags = s.tags();
    CHECK(std::find(tags.begin(), tags.end(), AttributeTag::SV) != tags.end());
    CHECK(std::find(tags.begin(), tags.end(), AttributeTag::IV) != tags.end());
  }
  for (const SynthSpec& s : plan.train) CHECK_NOTHROW(generate_synthetic(s));
  CHECK(plan_dataset(d).test[1].seed == plan.test[1].seed);
}

TEST_CASE("results files hold one corner line per frame") {
  const fs::path dir = scratch_dir("results");
  const std::vector<BBox> est{{10, 10, 4, 6}, {11, 12, 5, 5}, {12, 14, 6, 4}};
  write_results("seq", est, dir / "seq.txt");
  CHECK(read_boxes(dir / "seq.txt") == est);
  std::ifstream in(dir / "seq.txt");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == est.size());
  CHECK_THROWS_AS(write_results("seq", {}, dir / "empty.txt"), Error);
  // A regular file where a directory is needed.
  CHECK_THROWS_AS(write_results("seq", est, dir / "seq.txt" / "nested.txt"), Error);
}

#pragma once

// Deterministic synthetic tracking sequences: a shaded geometric target
// moving over a textured background, optionally with distractor shapes, an
// occluding bar, a brightness ramp and scale drift.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semtrack/sequence.hpp"

namespace semtrack {

enum class ShapeKind { kSquare, kDisk, kTriangle, kCross, kRing };

std::string_view to_string(ShapeKind shape);
std::optional<ShapeKind> parse_shape(std::string_view name);

// Membership of the normalised point (u, v) in [-0.5, 0.5]^2 of the shape's
// bounding box. Every shape touches all four sides of its box.
bool shape_contains(ShapeKind shape, double u, double v);

enum class MotionKind { kLinear, kSinusoidal };

struct SynthSpec {
  std::string name = "synthetic";
  ShapeKind shape = ShapeKind::kSquare;
  // Category written to the sequence; empty means the shape name.
  std::string category;
  std::size_t frames = 40;
  std::size_t width = 128;
  std::size_t height = 128;
  double start_x = 64.0;  // target centre in frame 0
  double start_y = 64.0;
  double target_w = 30.0;
  double target_h = 30.0;
  MotionKind motion = MotionKind::kLinear;
  double vx = 0.0;  // pixels per frame
  double vy = 0.0;
  double amplitude_x = 0.0;  // sinusoidal motion only
  double amplitude_y = 0.0;
  double period = 40.0;
  double scale_drift = 0.0;     // size_k = size_0 * exp(scale_drift * k)
  double brightness_end = 1.0;  // global gain ramps linearly from 1 to this
  // Per-channel illuminant gain reached on the last frame, on top of the
  // brightness ramp.
  std::array<double, 3> illuminant_end{1.0, 1.0, 1.0};
  // Per-channel gain on the target's own colour reached on the last frame.
  std::array<double, 3> target_tint_end{1.0, 1.0, 1.0};
  bool occluder = false;
  double occluder_width = 0.4;  // bar width relative to the target width
  std::size_t distractors = 0;
  std::vector<ShapeKind> distractor_shapes;  // empty: every other shape
  // Share of distractors painted in the target's colour.
  double distractor_color_match = 0.0;
  // Optional target-coloured distractor on a straight path whose centre is at
  // target centre + offset at crosser_frame. Tagged BC.
  std::optional<ShapeKind> crosser;
  std::size_t crosser_frame = 0;
  double crosser_vx = 0.0;  // relative to the image, pixels per frame
  double crosser_vy = 0.0;
  double crosser_dx = 0.0;  // pixels
  double crosser_dy = 0.0;
  double texture = 0.1;
  double noise = 0.02;
  std::uint64_t seed = 1;

  std::string category_name() const;
  std::vector<AttributeTag> tags() const;
};

// Target box in frame k (centre format), independent of rendering.
BBox target_box(const SynthSpec& spec, std::size_t frame);

// Anti-aliased target coverage in [0, 1] per pixel (row-major), before any
// occlusion.
std::vector<float> rasterize_target(const SynthSpec& spec, std::size_t frame);

// Throws InfeasibleError when the target is less than half inside the frame
// on some frame.
Sequence generate_synthetic(const SynthSpec& spec);

// Dataset-level recipe for the generator command.
struct DatasetSpec {
  std::uint64_t seed = 7;
  std::vector<ShapeKind> categories{ShapeKind::kSquare, ShapeKind::kDisk, ShapeKind::kTriangle};
  std::vector<ShapeKind> x_shapes{ShapeKind::kCross, ShapeKind::kRing};
  std::string category_x_name = "X";
  std::size_t train_per_category = 32;
  std::size_t x_train_sequences = 32;
  std::size_t test_sequences = 10;
  std::size_t train_frames = 40;
  std::size_t test_frames = 40;
  std::size_t width = 128;
  std::size_t height = 128;
  std::size_t distractors = 2;
  double distractor_color_match = 0.5;
  // Largest per-channel illuminant change on held-out sequences.
  double test_illuminant_shift = 0.4;
  // Largest per-channel change of the target's own colour on held-out sequences.
  double test_target_tint = 0.5;
  // Held-out sequences get a crosser of another category.
  bool test_crossers = true;
};

struct DatasetPlan {
  std::vector<SynthSpec> train;
  std::vector<SynthSpec> test;
};

DatasetPlan plan_dataset(const DatasetSpec& spec);

}  // namespace semtrack

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "semtrack/random.hpp"
#include "semtrack/tensor.hpp"

namespace semtrack {

// Axis-aligned box, centre-based: (x, y) is the centre in pixel coordinates,
// w and h are positive extents. Pixel (i, j) covers [i, i+1) x [j, j+1).
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  static BBox from_corner(double left, double top, double w, double h) {
    return {left + 0.5 * w, top + 0.5 * h, w, h};
  }
  double left() const { return x - 0.5 * w; }
  double top() const { return y - 0.5 * h; }
  double right() const { return x + 0.5 * w; }
  double bottom() const { return y + 0.5 * h; }
  double area() const { return w * h; }
  bool valid() const { return w > 0.0 && h > 0.0; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

double iou(const BBox& a, const BBox& b);

// RGB frame with values in [0, 1], interleaved row-major (y, x, channel).
// Per-channel means are computed at construction.
class FrameImage {
 public:
  FrameImage() = default;
  FrameImage(std::size_t width, std::size_t height, std::vector<float> rgb);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::span<const float> pixels() const { return rgb_; }
  float at(std::size_t x, std::size_t y, std::size_t c) const {
    return rgb_[(y * width_ + x) * 3 + c];
  }
  const std::array<double, 3>& channel_mean() const { return mean_; }
  BBox bounds() const {
    return BBox::from_corner(0.0, 0.0, static_cast<double>(width_), static_cast<double>(height_));
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<float> rgb_;
  std::array<double, 3> mean_{};
};

// Diagonal covariance of the box perturbation: variances of the x and y
// centre offsets (pixels^2) and of the log-scale factors applied to w and h.
struct Perturbation {
  std::array<double, 4> variance{};  // x, y, log w, log h

  // sigma_xy = 0.3 * min(w, h), sigma_scale = 0.05.
  static Perturbation for_box(const BBox& box, double xy_factor = 0.3, double scale_sigma = 0.05);
};

// Boxes with extents below this many pixels are widened to it.
inline constexpr double kMinBoxSide = 4.0;

// Draws `count` boxes centre + N(0, R): x += e0, y += e1, w *= exp(e2),
// h *= exp(e3). Extents are clamped to [kMinBoxSide, frame extent] and the
// centre to the frame.
std::vector<BBox> sample_gaussian(const BBox& center, const Perturbation& r, std::size_t count,
                                  const BBox& frame_bounds, Rng& rng);

struct OverlapWindow {
  std::size_t count = 0;
  double overlap_min = 0.0;
  double overlap_max = 1.0;
};

// Rejection sampling of boxes whose IoU with `gt` lies in the window.
// Throws InfeasibleError after 100 x count proposals without success.
std::vector<BBox> sample_by_overlap(const BBox& gt, const BBox& frame_bounds,
                                    const OverlapWindow& spec, Rng& rng);

// Bilinear resample of `box` to a 3 x side x side tensor. Samples falling
// outside the frame take the frame's per-channel mean.
Tensor crop_resize(const FrameImage& frame, const BBox& box, std::size_t side);
// Batch version: N x 3 x side x side.
Tensor crop_batch(const FrameImage& frame, std::span<const BBox> boxes, std::size_t side);

}  // namespace semtrack

#include "semtrack/regions.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "semtrack/error.hpp"

namespace semtrack {

double iou(const BBox& a, const BBox& b) {
  if (a == b) return a.valid() ? 1.0 : 0.0;
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

FrameImage::FrameImage(std::size_t width, std::size_t height, std::vector<float> rgb)
    : width_(width), height_(height), rgb_(std::move(rgb)) {
  if (width == 0 || height == 0) throw ShapeError("frame extents must be positive");
  if (rgb_.size() != width * height * 3) {
    throw ShapeError("frame data length " + std::to_string(rgb_.size()) + " does not match " +
                     std::to_string(width) + "x" + std::to_string(height) + "x3");
  }
  std::array<double, 3> sum{};
  for (std::size_t i = 0; i < rgb_.size(); ++i) sum[i % 3] += rgb_[i];
  const double n = static_cast<double>(width * height);
  for (std::size_t c = 0; c < 3; ++c) mean_[c] = sum[c] / n;
}

Perturbation Perturbation::for_box(const BBox& box, double xy_factor, double scale_sigma) {
  const double s = xy_factor * std::min(box.w, box.h);
  return {{s * s, s * s, scale_sigma * scale_sigma, scale_sigma * scale_sigma}};
}

namespace {

BBox clamp_to_frame(BBox b, const BBox& frame) {
  b.w = std::clamp(b.w, kMinBoxSide, std::max(kMinBoxSide, frame.w));
  b.h = std::clamp(b.h, kMinBoxSide, std::max(kMinBoxSide, frame.h));
  b.x = std::clamp(b.x, frame.left(), frame.right());
  b.y = std::clamp(b.y, frame.top(), frame.bottom());
  return b;
}

}  // namespace

std::vector<BBox> sample_gaussian(const BBox& center, const Perturbation& r, std::size_t count,
                                  const BBox& frame_bounds, Rng& rng) {
  std::array<double, 4> sd{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (r.variance[i] < 0.0) throw Error("perturbation variances must be non-negative");
    sd[i] = std::sqrt(r.variance[i]);
  }
  std::vector<BBox> out;
  out.reserve(count);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t n = 0; n < count; ++n) {
    const double e0 = unit(rng), e1 = unit(rng), e2 = unit(rng), e3 = unit(rng);
    BBox b{center.x + sd[0] * e0, center.y + sd[1] * e1, center.w * std::exp(sd[2] * e2),
           center.h * std::exp(sd[3] * e3)};
    out.push_back(clamp_to_frame(b, frame_bounds));
  }
  return out;
}

std::vector<BBox> sample_by_overlap(const BBox& gt, const BBox& frame_bounds,
                                    const OverlapWindow& spec, Rng& rng) {
  if (!(spec.overlap_min <= spec.overlap_max) || spec.overlap_min < 0.0 || spec.overlap_max > 1.0) {
    throw Error("overlap window must satisfy 0 <= min <= max <= 1");
  }
  if (!gt.valid()) throw Error("sample_by_overlap: ground-truth box must have positive extents");
  std::vector<BBox> out;
  out.reserve(spec.count);
  if (spec.count == 0) return out;

  // Proposals: tight Gaussians whose spread shrinks to zero as the window
  // approaches IoU 1, and broad ones (uniform over the frame or a wide
  // Gaussian) for low-overlap windows.
  const double spread = 1.0 - spec.overlap_min;
  const bool broad = spec.overlap_max < 0.5;
  const double side = std::min(gt.w, gt.h);
  std::normal_distribution<double> unit(0.0, 1.0);
  const std::size_t budget = 100 * spec.count;
  for (std::size_t attempt = 0; attempt < budget && out.size() < spec.count; ++attempt) {
    BBox b;
    if (!broad) {
      const double s = spread * uniform(rng, 0.25, 1.0);
      b = {gt.x + 0.5 * s * side * unit(rng), gt.y + 0.5 * s * side * unit(rng),
           gt.w * std::exp(0.5 * s * unit(rng)), gt.h * std::exp(0.5 * s * unit(rng))};
    } else if (attempt % 2 == 0) {
      b = {uniform(rng, frame_bounds.left(), frame_bounds.right()),
           uniform(rng, frame_bounds.top(), frame_bounds.bottom()), gt.w * std::exp(0.3 * unit(rng)),
           gt.h * std::exp(0.3 * unit(rng))};
    } else {
      b = {gt.x + gt.w * unit(rng), gt.y + gt.h * unit(rng), gt.w * std::exp(0.3 * unit(rng)),
           gt.h * std::exp(0.3 * unit(rng))};
    }
    if (spread > 0.0 || broad) b = clamp_to_frame(b, frame_bounds);
    const double o = iou(gt, b);
    if (o >= spec.overlap_min && o <= spec.overlap_max) out.push_back(b);
  }
  if (out.size() < spec.count) {
    throw InfeasibleError("sample_by_overlap: only " + std::to_string(out.size()) + " of " +
                          std::to_string(spec.count) + " boxes reached overlap window [" +
                          std::to_string(spec.overlap_min) + ", " + std::to_string(spec.overlap_max) +
                          "] within " + std::to_string(budget) + " attempts");
  }
  return out;
}

namespace {

void crop_into(const FrameImage& frame, const BBox& box, std::size_t side, double* dst) {
  if (!box.valid()) throw Error("crop_resize: box extents must be positive");
  const double fw = static_cast<double>(frame.width());
  const double fh = static_cast<double>(frame.height());
  if (box.right() <= 0.0 || box.left() >= fw || box.bottom() <= 0.0 || box.top() >= fh) {
    throw Error("crop_resize: box lies entirely outside the frame");
  }
  const std::size_t plane = side * side;
  const double sx = box.w / static_cast<double>(side);
  const double sy = box.h / static_cast<double>(side);
  const auto& mean = frame.channel_mean();
  const std::size_t W = frame.width();
  const std::span<const float> px = frame.pixels();
  for (std::size_t j = 0; j < side; ++j) {
    // Continuous source coordinate of the output pixel centre, shifted so
    // that integer values land on source pixel centres.
    const double fy = box.top() + (static_cast<double>(j) + 0.5) * sy - 0.5;
    const bool y_out = fy < -0.5 || fy >= fh - 0.5;
    const double cy = std::clamp(fy, 0.0, fh - 1.0);
    const std::size_t y0 = static_cast<std::size_t>(std::floor(cy));
    const std::size_t y1 = std::min(y0 + 1, frame.height() - 1);
    const double ty = cy - static_cast<double>(y0);
    for (std::size_t i = 0; i < side; ++i) {
      const double fx = box.left() + (static_cast<double>(i) + 0.5) * sx - 0.5;
      const std::size_t o = j * side + i;
      if (y_out || fx < -0.5 || fx >= fw - 0.5) {
        for (std::size_t c = 0; c < 3; ++c) dst[c * plane + o] = mean[c];
        continue;
      }
      const double cx = std::clamp(fx, 0.0, fw - 1.0);
      const std::size_t x0 = static_cast<std::size_t>(std::floor(cx));
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double tx = cx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v00 = px[(y0 * W + x0) * 3 + c];
        const double v01 = px[(y0 * W + x1) * 3 + c];
        const double v10 = px[(y1 * W + x0) * 3 + c];
        const double v11 = px[(y1 * W + x1) * 3 + c];
        const double top = v00 + tx * (v01 - v00);
        const double bot = v10 + tx * (v11 - v10);
        dst[c * plane + o] = top + ty * (bot - top);
      }
    }
  }
}

}  // namespace

Tensor crop_resize(const FrameImage& frame, const BBox& box, std::size_t side) {
  if (side == 0) throw Error("crop_resize: side must be positive");
  Tensor out({3, side, side});
  crop_into(frame, box, side, out.data());
  return out;
}

Tensor crop_batch(const FrameImage& frame, std::span<const BBox> boxes, std::size_t side) {
  if (boxes.empty()) throw Error("crop_batch: no boxes");
  if (side == 0) throw Error("crop_batch: side must be positive");
  Tensor out({boxes.size(), 3, side, side});
  for (std::size_t n = 0; n < boxes.size(); ++n) crop_into(frame, boxes[n], side, out.data() + n * 3 * side * side);
  return out;
}

}  // namespace semtrack

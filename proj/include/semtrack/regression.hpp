#pragma once

#include <array>
#include <span>

#include "semtrack/regions.hpp"
#include "semtrack/tensor.hpp"

namespace semtrack {

// Corrections (tx, ty, tw, th) that move `sample` onto `gt`:
// tx = (gt.x - s.x) / s.w, ty = (gt.y - s.y) / s.h,
// tw = ln(gt.w / s.w),     th = ln(gt.h / s.h).
using BoxDelta = std::array<double, 4>;

BoxDelta regression_targets(const BBox& gt, const BBox& sample);

// Inverse of regression_targets: applies a correction to a box.
BBox apply_delta(const BBox& box, const BoxDelta& delta);

// Four independent linear maps from trunk features to box corrections.
struct RegressorSet {
  Tensor weights;               // 4 x D, rows g_x, g_y, g_w, g_h
  std::array<double, 4> bias{};
  double ridge = 1.0;

  std::size_t feature_width() const { return weights.empty() ? 0 : weights.dim(1); }
  BoxDelta predict(std::span<const double> feature) const;
};

// Ridge least squares per output on centred data (the bias is not
// penalised): minimises sum |W f + b - t|^2 + ridge |W|^2.
// features N x D, targets N x 4. Solved through the normal equations with a
// Cholesky factorisation; throws semtrack::Error when the system is
// singular.
RegressorSet fit_regressors(const Tensor& features, const Tensor& targets, double ridge);

// x' = g_x w + x, y' = g_y h + y, w' = exp(g_w) w, h' = exp(g_h) h.
BBox apply_regressors(const RegressorSet& reg, std::span<const double> feature, const BBox& box);

}  // namespace semtrack

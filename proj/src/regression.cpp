#include "semtrack/regression.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <string>

#include "semtrack/error.hpp"
#include "semtrack/simd/kernels.hpp"

namespace semtrack {

BoxDelta regression_targets(const BBox& gt, const BBox& sample) {
  if (!sample.valid()) throw Error("regression_targets: sample box extents must be positive");
  if (!gt.valid()) throw Error("regression_targets: ground-truth box extents must be positive");
  return {(gt.x - sample.x) / sample.w, (gt.y - sample.y) / sample.h, std::log(gt.w / sample.w),
          std::log(gt.h / sample.h)};
}

BBox apply_delta(const BBox& box, const BoxDelta& d) {
  return {d[0] * box.w + box.x, d[1] * box.h + box.y, std::exp(d[2]) * box.w,
          std::exp(d[3]) * box.h};
}

BoxDelta RegressorSet::predict(std::span<const double> feature) const {
  if (feature.size() != feature_width()) {
    throw ShapeError("regressor expects " + std::to_string(feature_width()) +
                     " features, got " + std::to_string(feature.size()));
  }
  BoxDelta d{};
  for (std::size_t k = 0; k < 4; ++k) {
    d[k] = simd::dot(weights.data() + k * feature.size(), feature.data(), feature.size()) + bias[k];
  }
  return d;
}

RegressorSet fit_regressors(const Tensor& features, const Tensor& targets, double ridge) {
  if (features.rank() != 2) throw ShapeError("fit_regressors: features must be N x D");
  if (targets.shape() != Shape{features.dim(0), 4}) {
    throw ShapeError("fit_regressors: targets must be " + to_string(Shape{features.dim(0), 4}) +
                     ", got " + to_string(targets.shape()));
  }
  if (!(ridge >= 0.0)) throw Error("fit_regressors: ridge strength must be non-negative");
  const Eigen::Index n = static_cast<Eigen::Index>(features.dim(0));
  const Eigen::Index d = static_cast<Eigen::Index>(features.dim(1));
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> X(features.data(), n, d);
  const Eigen::Map<const RowMajor> T(targets.data(), n, 4);

  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const Eigen::RowVectorXd t_mean = T.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::MatrixXd Tc = T.rowwise() - t_mean;

  Eigen::MatrixXd gram = Xc.transpose() * Xc;
  gram.diagonal().array() += ridge;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  const double scale = std::max(1.0, gram.diagonal().cwiseAbs().maxCoeff());
  if (llt.info() != Eigen::Success ||
      llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 1e-12 * std::sqrt(scale)) {
    throw Error("fit_regressors: normal equations are singular (ridge " + std::to_string(ridge) +
                ")");
  }
  const Eigen::MatrixXd W = llt.solve(Xc.transpose() * Tc);  // D x 4

  RegressorSet reg;
  reg.ridge = ridge;
  reg.weights = Tensor({4, features.dim(1)});
  for (Eigen::Index k = 0; k < 4; ++k) {
    for (Eigen::Index j = 0; j < d; ++j) reg.weights[static_cast<std::size_t>(k * d + j)] = W(j, k);
    reg.bias[static_cast<std::size_t>(k)] = t_mean(k) - x_mean.dot(W.col(k));
  }
  return reg;
}

BBox apply_regressors(const RegressorSet& reg, std::span<const double> feature, const BBox& box) {
  return apply_delta(box, reg.predict(feature));
}

}  // namespace semtrack

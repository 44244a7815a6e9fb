#include "semtrack/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "semtrack/error.hpp"

namespace semtrack {

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace {
void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != element_count(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

std::size_t Tensor::row_size() const {
  return shape_.empty() ? 0 : data_.size() / shape_[0];
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t n = row_size();
  return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t n = row_size();
  return std::span<const double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  check_extents(shape);
  if (element_count(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (begin >= end || end > t.dim(0)) {
    throw ShapeError("row slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + to_string(t.shape()));
  }
  Shape shape = t.shape();
  shape[0] = end - begin;
  const std::size_t n = t.row_size();
  std::vector<double> data(t.data() + begin * n, t.data() + end * n);
  return Tensor(std::move(shape), std::move(data));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ShapeError("gather_rows needs at least one row");
  Shape shape = t.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  const std::size_t n = t.row_size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.dim(0)) throw ShapeError("gather_rows index out of range");
    std::copy_n(t.data() + rows[i] * n, n, out.data() + i * n);
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows needs at least one part");
  Shape shape = parts[0].shape();
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw ShapeError("concat_rows trailing extents differ: " + to_string(p.shape()) +
                       " vs " + to_string(shape));
    }
    rows += p.dim(0);
  }
  shape[0] = rows;
  std::vector<double> data;
  data.reserve(element_count(shape));
  for (const Tensor& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace semtrack

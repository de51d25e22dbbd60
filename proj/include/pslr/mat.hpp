#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace pslr {

// Dense row-major matrix of doubles. Plain storage; heavy lifting happens in
// the kernel layer.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, 0.0);
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

struct ConstMatView {
  const double* ptr = nullptr;
  std::size_t rows = 0, cols = 0;

  double operator()(std::size_t i, std::size_t j) const { return ptr[i * cols + j]; }
  std::size_t size() const { return rows * cols; }
};

// Non-owning view into flat parameter/gradient storage.
struct MatView {
  double* ptr = nullptr;
  std::size_t rows = 0, cols = 0;

  double& operator()(std::size_t i, std::size_t j) const { return ptr[i * cols + j]; }
  std::size_t size() const { return rows * cols; }
  operator ConstMatView() const { return {ptr, rows, cols}; }
};

}  // namespace pslr

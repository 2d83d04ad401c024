#pragma once

#include <vector>

#include "amod/errors.hpp"

namespace amod {

// Dense row-major 2-D array.
template <typename T>
class Grid2 {
 public:
  Grid2() : rows_(0), cols_(0) {}
  Grid2(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  T& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  const T& operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::vector<T>& flat() { return data_; }
  const std::vector<T>& flat() const { return data_; }

  bool operator==(const Grid2&) const = default;

 private:
  int rows_, cols_;
  std::vector<T> data_;
};

// Dense 3-D array, layout [d0][d1][d2].
template <typename T>
class Grid3 {
 public:
  Grid3() : d0_(0), d1_(0), d2_(0) {}
  Grid3(int d0, int d1, int d2, T fill = T{})
      : d0_(d0), d1_(d1), d2_(d2),
        data_(static_cast<std::size_t>(d0) * d1 * d2, fill) {}

  T& operator()(int a, int b, int c) {
    return data_[(static_cast<std::size_t>(a) * d1_ + b) * d2_ + c];
  }
  const T& operator()(int a, int b, int c) const {
    return data_[(static_cast<std::size_t>(a) * d1_ + b) * d2_ + c];
  }

  int dim0() const { return d0_; }
  int dim1() const { return d1_; }
  int dim2() const { return d2_; }
  std::vector<T>& flat() { return data_; }
  const std::vector<T>& flat() const { return data_; }

  bool operator==(const Grid3&) const = default;

 private:
  int d0_, d1_, d2_;
  std::vector<T> data_;
};

}  // namespace amod

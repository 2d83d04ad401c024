#pragma once

#include <cstddef>
#include <vector>

#include "amod/errors.hpp"
#include "amod/grid.hpp"

namespace amod {

// Dense row-major matrix of doubles; the only tensor type the networks use.
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const {
    return v[static_cast<std::size_t>(i) * cols + j];
  }

  std::size_t size() const { return v.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Mat&) const = default;
};

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);

inline Mat mat_of_grid(const Grid2<double>& g) {
  Mat m(g.rows(), g.cols());
  m.v = g.flat();
  return m;
}

}  // namespace amod

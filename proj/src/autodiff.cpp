#include "amod/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "amod/special.hpp"

namespace amod {

Mat matmul(const Mat& a, const Mat& b) {
  require(a.cols == b.rows, "matmul: inner dimensions differ");
  Mat out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

Mat transpose(const Mat& a) {
  Mat out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

NodeId Tape::push(Mat value, std::function<void(Tape&, const Mat&)> backprop) {
  Node n;
  n.value = std::move(value);
  if (recording_) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::accumulate(NodeId id, const Mat& g) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat(n.value.rows, n.value.cols);
  require(n.grad.same_shape(g), "tape: gradient shape mismatch");
  for (std::size_t k = 0; k < g.size(); ++k) n.grad.v[k] += g.v[k];
}

NodeId Tape::input(Mat value) { return push(std::move(value), {}); }

NodeId Tape::param(ParamTensor& p) {
  Node n;
  n.value = p.value;
  if (recording_) n.bound = &p;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::backward(NodeId scalar_loss) {
  check(scalar_loss);
  const Mat& lv = nodes_[scalar_loss].value;
  require(lv.rows == 1 && lv.cols == 1, "backward: loss must be scalar");
  accumulate(scalar_loss, Mat(1, 1, 1.0));

  for (int id = scalar_loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;  // not reachable from the loss
    if (n.backprop) n.backprop(*this, n.grad);
    if (n.bound) {
      require(n.bound->grad.same_shape(n.grad), "param gradient shape mismatch");
      for (std::size_t k = 0; k < n.grad.size(); ++k)
        n.bound->grad.v[k] += n.grad.v[k];
    }
  }
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  require(av.same_shape(bv), "add: shape mismatch");
  Mat out = av;
  for (std::size_t k = 0; k < out.size(); ++k) out.v[k] += bv.v[k];
  return push(std::move(out), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  require(av.same_shape(bv), "sub: shape mismatch");
  Mat out = av;
  for (std::size_t k = 0; k < out.size(); ++k) out.v[k] -= bv.v[k];
  return push(std::move(out), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    Mat neg = g;
    for (double& x : neg.v) x = -x;
    t.accumulate(b, neg);
  });
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  require(av.same_shape(bv), "mul: shape mismatch");
  Mat out = av;
  for (std::size_t k = 0; k < out.size(); ++k) out.v[k] *= bv.v[k];
  return push(std::move(out), [a, b](Tape& t, const Mat& g) {
    Mat ga = g, gb = g;
    const Mat& av2 = t.value(a);
    const Mat& bv2 = t.value(b);
    for (std::size_t k = 0; k < g.size(); ++k) {
      ga.v[k] *= bv2.v[k];
      gb.v[k] *= av2.v[k];
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

NodeId Tape::scale(NodeId a, double k) {
  Mat out = value(a);
  for (double& x : out.v) x *= k;
  return push(std::move(out), [a, k](Tape& t, const Mat& g) {
    Mat ga = g;
    for (double& x : ga.v) x *= k;
    t.accumulate(a, ga);
  });
}

NodeId Tape::add_const(NodeId a, double k) {
  Mat out = value(a);
  for (double& x : out.v) x += k;
  return push(std::move(out),
              [a](Tape& t, const Mat& g) { t.accumulate(a, g); });
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Mat out = amod::matmul(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, amod::matmul(g, transpose(t.value(b))));
    t.accumulate(b, amod::matmul(transpose(t.value(a)), g));
  });
}

NodeId Tape::add_row_broadcast(NodeId a, NodeId row) {
  const Mat& av = value(a);
  const Mat& rv = value(row);
  require(rv.rows == 1 && rv.cols == av.cols, "add_row_broadcast: shape mismatch");
  Mat out = av;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) += rv(0, j);
  return push(std::move(out), [a, row](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    Mat gr(1, g.cols);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) gr(0, j) += g(i, j);
    t.accumulate(row, gr);
  });
}

NodeId Tape::mul_col_broadcast(NodeId a, NodeId col) {
  const Mat& av = value(a);
  const Mat& cv = value(col);
  require(cv.cols == 1 && cv.rows == av.rows, "mul_col_broadcast: shape mismatch");
  Mat out = av;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) *= cv(i, 0);
  return push(std::move(out), [a, col](Tape& t, const Mat& g) {
    const Mat& av2 = t.value(a);
    const Mat& cv2 = t.value(col);
    Mat ga = g;
    Mat gc(g.rows, 1);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) {
        ga(i, j) *= cv2(i, 0);
        gc(i, 0) += g(i, j) * av2(i, j);
      }
    t.accumulate(a, ga);
    t.accumulate(col, gc);
  });
}

NodeId Tape::relu(NodeId a) {
  Mat out = value(a);
  for (double& x : out.v) x = x > 0.0 ? x : 0.0;
  return push(std::move(out), [a](Tape& t, const Mat& g) {
    Mat ga = g;
    const Mat& av = t.value(a);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (av.v[k] <= 0.0) ga.v[k] = 0.0;
    t.accumulate(a, ga);
  });
}

NodeId Tape::softplus(NodeId a) {
  Mat out = value(a);
  for (double& x : out.v)
    x = x > 30.0 ? x : std::log1p(std::exp(x));  // overflow-safe
  return push(std::move(out), [a](Tape& t, const Mat& g) {
    Mat ga = g;
    const Mat& av = t.value(a);
    for (std::size_t k = 0; k < g.size(); ++k)
      ga.v[k] *= 1.0 / (1.0 + std::exp(-av.v[k]));
    t.accumulate(a, ga);
  });
}

NodeId Tape::log(NodeId a) {
  Mat out = value(a);
  for (double& x : out.v) x = std::log(x);
  return push(std::move(out), [a](Tape& t, const Mat& g) {
    Mat ga = g;
    const Mat& av = t.value(a);
    for (std::size_t k = 0; k < g.size(); ++k) ga.v[k] /= av.v[k];
    t.accumulate(a, ga);
  });
}

NodeId Tape::exp(NodeId a) {
  Mat out = value(a);
  for (double& x : out.v) x = std::exp(x);
  return push(std::move(out), [a](Tape& t, const Mat& g) {
    Mat ga = g;
    const Mat& av = t.value(a);
    for (std::size_t k = 0; k < g.size(); ++k) ga.v[k] *= std::exp(av.v[k]);
    t.accumulate(a, ga);
  });
}

NodeId Tape::lgamma(NodeId a) {
  Mat out = value(a);
  for (double& x : out.v) x = std::lgamma(x);
  return push(std::move(out), [a](Tape& t, const Mat& g) {
    Mat ga = g;
    const Mat& av = t.value(a);
    for (std::size_t k = 0; k < g.size(); ++k) ga.v[k] *= digamma(av.v[k]);
    t.accumulate(a, ga);
  });
}

NodeId Tape::sum(NodeId a) {
  const Mat& av = value(a);
  double s = 0.0;
  for (double x : av.v) s += x;
  return push(Mat(1, 1, s), [a](Tape& t, const Mat& g) {
    const Mat& av2 = t.value(a);
    t.accumulate(a, Mat(av2.rows, av2.cols, g(0, 0)));
  });
}

NodeId Tape::mean(NodeId a) {
  const Mat& av = value(a);
  require(av.size() > 0, "mean of empty matrix");
  double s = 0.0;
  for (double x : av.v) s += x;
  const double inv = 1.0 / static_cast<double>(av.size());
  return push(Mat(1, 1, s * inv), [a, inv](Tape& t, const Mat& g) {
    const Mat& av2 = t.value(a);
    t.accumulate(a, Mat(av2.rows, av2.cols, g(0, 0) * inv));
  });
}

NodeId Tape::row_sum(NodeId a) {
  const Mat& av = value(a);
  Mat out(av.rows, 1);
  for (int i = 0; i < av.rows; ++i)
    for (int j = 0; j < av.cols; ++j) out(i, 0) += av(i, j);
  return push(std::move(out), [a](Tape& t, const Mat& g) {
    const Mat& av2 = t.value(a);
    Mat ga(av2.rows, av2.cols);
    for (int i = 0; i < av2.rows; ++i)
      for (int j = 0; j < av2.cols; ++j) ga(i, j) = g(i, 0);
    t.accumulate(a, ga);
  });
}

NodeId Tape::col_concat(NodeId a, NodeId b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  require(av.rows == bv.rows, "col_concat: row mismatch");
  Mat out(av.rows, av.cols + bv.cols);
  for (int i = 0; i < av.rows; ++i) {
    for (int j = 0; j < av.cols; ++j) out(i, j) = av(i, j);
    for (int j = 0; j < bv.cols; ++j) out(i, av.cols + j) = bv(i, j);
  }
  const int ac = av.cols, bc = bv.cols;
  return push(std::move(out), [a, b, ac, bc](Tape& t, const Mat& g) {
    Mat ga(g.rows, ac), gb(g.rows, bc);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < ac; ++j) ga(i, j) = g(i, j);
      for (int j = 0; j < bc; ++j) gb(i, j) = g(i, ac + j);
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

NodeId Tape::slice_cols(NodeId a, int c0, int c1) {
  const Mat& av = value(a);
  require(0 <= c0 && c0 < c1 && c1 <= av.cols, "slice_cols: bad range");
  Mat out(av.rows, c1 - c0);
  for (int i = 0; i < av.rows; ++i)
    for (int j = c0; j < c1; ++j) out(i, j - c0) = av(i, j);
  return push(std::move(out), [a, c0](Tape& t, const Mat& g) {
    const Mat& av2 = t.value(a);
    Mat ga(av2.rows, av2.cols);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) ga(i, c0 + j) = g(i, j);
    t.accumulate(a, ga);
  });
}

NodeId Tape::reshape(NodeId a, int r, int c) {
  const Mat& av = value(a);
  require(static_cast<std::size_t>(r) * c == av.size(), "reshape: size mismatch");
  Mat out(r, c);
  out.v = av.v;
  return push(std::move(out), [a](Tape& t, const Mat& g) {
    const Mat& av2 = t.value(a);
    Mat ga(av2.rows, av2.cols);
    ga.v = g.v;
    t.accumulate(a, ga);
  });
}

NodeId Tape::min_elem(NodeId a, NodeId b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  require(av.same_shape(bv), "min_elem: shape mismatch");
  Mat out = av;
  for (std::size_t k = 0; k < out.size(); ++k) out.v[k] = std::min(out.v[k], bv.v[k]);
  return push(std::move(out), [a, b](Tape& t, const Mat& g) {
    const Mat& av2 = t.value(a);
    const Mat& bv2 = t.value(b);
    Mat ga(av2.rows, av2.cols), gb(av2.rows, av2.cols);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (av2.v[k] <= bv2.v[k]) ga.v[k] = g.v[k];  // ties favor a
      else gb.v[k] = g.v[k];
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

NodeId Tape::max_with(NodeId a, const Mat& floor_mat) {
  const Mat& av = value(a);
  require(av.same_shape(floor_mat), "max_with: shape mismatch");
  Mat out = av;
  for (std::size_t k = 0; k < out.size(); ++k)
    out.v[k] = std::max(out.v[k], floor_mat.v[k]);
  Mat floor_copy = floor_mat;
  return push(std::move(out), [a, floor_copy](Tape& t, const Mat& g) {
    const Mat& av2 = t.value(a);
    Mat ga(av2.rows, av2.cols);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (av2.v[k] >= floor_copy.v[k]) ga.v[k] = g.v[k];
    t.accumulate(a, ga);
  });
}

NodeId Tape::row_logsumexp(NodeId a) {
  const Mat& av = value(a);
  Mat out(av.rows, 1);
  for (int i = 0; i < av.rows; ++i) {
    double m = av(i, 0);
    for (int j = 1; j < av.cols; ++j) m = std::max(m, av(i, j));
    double s = 0.0;
    for (int j = 0; j < av.cols; ++j) s += std::exp(av(i, j) - m);
    out(i, 0) = m + std::log(s);
  }
  Mat lse = out;
  return push(std::move(out), [a, lse](Tape& t, const Mat& g) {
    const Mat& av2 = t.value(a);
    Mat ga(av2.rows, av2.cols);
    for (int i = 0; i < av2.rows; ++i)
      for (int j = 0; j < av2.cols; ++j)
        ga(i, j) = g(i, 0) * std::exp(av2(i, j) - lse(i, 0));
    t.accumulate(a, ga);
  });
}

NodeId Tape::block_adj_mul(NodeId x, const Mat& adj) {
  const Mat& xv = value(x);
  require(adj.rows == adj.cols, "block_adj_mul: adjacency must be square");
  require(adj.rows > 0 && xv.rows % adj.rows == 0,
          "block_adj_mul: rows not a multiple of block size");
  const int n = adj.rows;
  const int blocks = xv.rows / n;
  Mat out(xv.rows, xv.cols);
  for (int b = 0; b < blocks; ++b)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        const double w = adj(i, k);
        if (w == 0.0) continue;
        for (int j = 0; j < xv.cols; ++j)
          out(b * n + i, j) += w * xv(b * n + k, j);
      }
  Mat adj_t = transpose(adj);
  return push(std::move(out), [x, adj_t, n](Tape& t, const Mat& g) {
    const int blocks = g.rows / n;
    Mat gx(g.rows, g.cols);
    for (int b = 0; b < blocks; ++b)
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
          const double w = adj_t(i, k);
          if (w == 0.0) continue;
          for (int j = 0; j < g.cols; ++j)
            gx(b * n + i, j) += w * g(b * n + k, j);
        }
    t.accumulate(x, gx);
  });
}

NodeId Tape::block_row_sum(NodeId x, int block) {
  const Mat& xv = value(x);
  require(block > 0 && xv.rows % block == 0,
          "block_row_sum: rows not a multiple of block size");
  const int groups = xv.rows / block;
  Mat out(groups, xv.cols);
  for (int b = 0; b < groups; ++b)
    for (int r = 0; r < block; ++r)
      for (int j = 0; j < xv.cols; ++j) out(b, j) += xv(b * block + r, j);
  return push(std::move(out), [x, block](Tape& t, const Mat& g) {
    Mat gx(g.rows * block, g.cols);
    for (int b = 0; b < g.rows; ++b)
      for (int r = 0; r < block; ++r)
        for (int j = 0; j < g.cols; ++j) gx(b * block + r, j) = g(b, j);
    t.accumulate(x, gx);
  });
}

}  // namespace amod

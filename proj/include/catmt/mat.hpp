#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "catmt/rng.hpp"

namespace catmt {

// Dense row-major matrix. Reductions accumulate in double regardless of
// the element type so float32 results stay well conditioned.
template <typename T>
struct MatT {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  MatT() = default;
  MatT(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, T(0)) {}

  static MatT zeros(int r, int c) { return MatT(r, c); }

  static MatT zeros_like(const MatT& m) { return MatT(m.rows, m.cols); }

  static MatT filled(int r, int c, T v) {
    MatT m(r, c);
    for (auto& x : m.data) x = v;
    return m;
  }

  // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); fan_in is the row count,
  // i.e. the input width of x*W.
  static MatT uniform_init(int r, int c, SplitMix64& rng) {
    MatT m(r, c);
    const double bound = 1.0 / std::sqrt(static_cast<double>(r));
    for (auto& x : m.data) x = static_cast<T>(rng.uniform(-bound, bound));
    return m;
  }

  T& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  T at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

  std::size_t size() const { return data.size(); }

  bool same_shape(const MatT& o) const { return rows == o.rows && cols == o.cols; }

  bool has_non_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return true;
    }
    return false;
  }

  template <typename U>
  MatT<U> cast() const {
    MatT<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Mat = MatT<float>;

namespace matops {

template <typename T>
void check_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

// C (+)= A * B. Row-buffered so the inner loop walks B contiguously; the
// per-element summation order (ascending k, double accumulator) is fixed.
template <typename T>
void matmul_acc(const MatT<T>& a, const MatT<T>& b, MatT<T>& c, bool accumulate) {
  check_shape<T>(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "matmul");
  const int n = b.cols;
  std::vector<double> acc(static_cast<std::size_t>(n));
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < n; ++j) {
      acc[static_cast<std::size_t>(j)] = accumulate ? static_cast<double>(c.at(i, j)) : 0.0;
    }
    for (int k = 0; k < a.cols; ++k) {
      const double av = a.at(i, k);
      const T* b_row = &b.data[static_cast<std::size_t>(k) * n];
      for (int j = 0; j < n; ++j) {
        acc[static_cast<std::size_t>(j)] += av * static_cast<double>(b_row[j]);
      }
    }
    for (int j = 0; j < n; ++j) c.at(i, j) = static_cast<T>(acc[static_cast<std::size_t>(j)]);
  }
}

template <typename T>
MatT<T> matmul(const MatT<T>& a, const MatT<T>& b) {
  MatT<T> c(a.rows, b.cols);
  matmul_acc(a, b, c, false);
  return c;
}

// C (+)= A * B^T
template <typename T>
void matmul_nt_acc(const MatT<T>& a, const MatT<T>& b, MatT<T>& c, bool accumulate) {
  check_shape<T>(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows, "matmul_nt");
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.rows; ++j) {
      double sum = accumulate ? static_cast<double>(c.at(i, j)) : 0.0;
      for (int k = 0; k < a.cols; ++k) {
        sum += static_cast<double>(a.at(i, k)) * static_cast<double>(b.at(j, k));
      }
      c.at(i, j) = static_cast<T>(sum);
    }
  }
}

template <typename T>
MatT<T> matmul_nt(const MatT<T>& a, const MatT<T>& b) {
  MatT<T> c(a.rows, b.rows);
  matmul_nt_acc(a, b, c, false);
  return c;
}

// C (+)= A^T * B, row-buffered like matmul_acc.
template <typename T>
void matmul_tn_acc(const MatT<T>& a, const MatT<T>& b, MatT<T>& c, bool accumulate) {
  check_shape<T>(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols, "matmul_tn");
  const int n = b.cols;
  std::vector<double> acc(static_cast<std::size_t>(n));
  for (int i = 0; i < a.cols; ++i) {
    for (int j = 0; j < n; ++j) {
      acc[static_cast<std::size_t>(j)] = accumulate ? static_cast<double>(c.at(i, j)) : 0.0;
    }
    for (int k = 0; k < a.rows; ++k) {
      const double av = a.at(k, i);
      const T* b_row = &b.data[static_cast<std::size_t>(k) * n];
      for (int j = 0; j < n; ++j) {
        acc[static_cast<std::size_t>(j)] += av * static_cast<double>(b_row[j]);
      }
    }
    for (int j = 0; j < n; ++j) c.at(i, j) = static_cast<T>(acc[static_cast<std::size_t>(j)]);
  }
}

template <typename T>
void add_inplace(MatT<T>& a, const MatT<T>& b) {
  check_shape<T>(a.same_shape(b), "add");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

template <typename T>
void scale_inplace(MatT<T>& a, T s) {
  for (auto& x : a.data) x *= s;
}

// Row-wise softmax with a visibility mask (1 = attend). Masked scores are
// excluded from the max and the sum; a fully masked row is an error.
template <typename T>
MatT<T> softmax_rows_masked(const MatT<T>& scores, const std::vector<std::uint8_t>& mask) {
  if (!mask.empty() && mask.size() != scores.size()) {
    throw std::invalid_argument("softmax mask shape mismatch");
  }
  MatT<T> out(scores.rows, scores.cols);
  for (int i = 0; i < scores.rows; ++i) {
    double max_score = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < scores.cols; ++j) {
      bool visible = mask.empty() || mask[static_cast<std::size_t>(i) * scores.cols + j];
      if (visible) max_score = std::max(max_score, static_cast<double>(scores.at(i, j)));
    }
    if (!std::isfinite(max_score)) {
      throw std::runtime_error("attention row " + std::to_string(i) + " is fully masked");
    }
    double sum = 0.0;
    for (int j = 0; j < scores.cols; ++j) {
      bool visible = mask.empty() || mask[static_cast<std::size_t>(i) * scores.cols + j];
      double e = visible ? std::exp(static_cast<double>(scores.at(i, j)) - max_score) : 0.0;
      out.at(i, j) = static_cast<T>(e);
      sum += e;
    }
    for (int j = 0; j < scores.cols; ++j) {
      out.at(i, j) = static_cast<T>(static_cast<double>(out.at(i, j)) / sum);
    }
  }
  return out;
}

template <typename T>
double max_abs_diff(const MatT<T>& a, const MatT<T>& b) {
  check_shape<T>(a.same_shape(b), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  }
  return m;
}

}  // namespace matops
}  // namespace catmt

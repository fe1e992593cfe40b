#pragma once

// Dense row-major tensor of doubles plus the handful of operations the attack,
// model and training code need. No broadcasting, no views.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rgd/errors.hpp"

namespace rgd {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor shape " + shape_str(shape_) + " holds " +
                           std::to_string(shape_size(shape_)) + " entries, got " +
                           std::to_string(data_.size()));
    }
  }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor vector(std::initializer_list<double> values) {
    return vector(std::vector<double>(values));
  }

  /// Row-major matrix from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> flat;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& row : rows) {
      if (row.size() != cols) throw DimensionError("ragged matrix literal");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return Tensor({rows.size(), cols}, std::move(flat));
  }

  static Tensor identity(std::size_t n) {
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) out.data_[i * n + i] = 1.0;
    return out;
  }

  static Tensor filled(Shape shape, double value) {
    Tensor out(std::move(shape));
    std::fill(out.data_.begin(), out.data_.end(), value);
    return out;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_rank(2);
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank(2);
    return shape_[1];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Row `r` of a rank-2 tensor as a contiguous span.
  std::span<const double> row(std::size_t r) const {
    require_rank(2);
    return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
  }
  std::span<double> row(std::size_t r) {
    require_rank(2);
    return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  /// Bitwise-exact comparison of shape and contents.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
    }
  }

  void require_rank(std::size_t r) const {
    if (shape_.size() != r) {
      throw DimensionError("expected rank-" + std::to_string(r) + " tensor, got " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

/// Standard matrix product; each output entry is a left-to-right fold over k.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  }
  return out;
}

template <typename F>
Tensor map_elementwise(const Tensor& a, F&& f) {
  std::vector<double> out(a.size());
  std::transform(a.data().begin(), a.data().end(), out.begin(), std::forward<F>(f));
  return Tensor(a.shape(), std::move(out));
}

template <typename F>
Tensor zip_elementwise(const Tensor& a, const Tensor& b, F&& f, const char* op = "zip") {
  require_same_shape(a, b, op);
  std::vector<double> out(a.size());
  std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.begin(), std::forward<F>(f));
  return Tensor(a.shape(), std::move(out));
}

enum class ReduceKind { Sum, Max, Mean };

inline double reduce(std::span<const double> values, ReduceKind kind) {
  if (values.empty()) throw DomainError("reduce: empty tensor");
  switch (kind) {
    case ReduceKind::Sum:
      return std::accumulate(values.begin(), values.end(), 0.0);
    case ReduceKind::Max:
      return *std::max_element(values.begin(), values.end());
    case ReduceKind::Mean:
      return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  }
  return 0.0;
}

inline double reduce(const Tensor& a, ReduceKind kind) { return reduce(a.data(), kind); }

inline Tensor operator+(const Tensor& a, const Tensor& b) {
  return zip_elementwise(a, b, std::plus<>{}, "add");
}
inline Tensor operator-(const Tensor& a, const Tensor& b) {
  return zip_elementwise(a, b, std::minus<>{}, "sub");
}
inline Tensor operator*(double s, const Tensor& a) {
  return map_elementwise(a, [s](double v) { return s * v; });
}

inline Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1) throw DimensionError("concat: rank-1 tensors only");
  std::vector<double> out(a.values());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return Tensor::vector(std::move(out));
}

inline double linf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double linf_norm(const Tensor& a) { return linf_norm(a.data()); }

/// `a` with its leading dimension dropped for row `r`, as a rank-1 tensor.
inline Tensor row_tensor(const Tensor& a, std::size_t r) {
  auto row = a.row(r);
  return Tensor::vector(std::vector<double>(row.begin(), row.end()));
}

}  // namespace rgd

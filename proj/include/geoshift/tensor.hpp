#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace geoshift {

/// Buffers start on a fixed alignment so vectorized reductions sum in an
/// order that depends on shapes only, never on where the allocator put them.
using AlignedBuffer = std::vector<double, Eigen::aligned_allocator<double>>;

/// Dense NCHW block of doubles. Value type: copies are deep.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  std::string shape_string() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  size_t index(int n, int c, int y, int x) const {
    return ((static_cast<size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }
  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  /// Contiguous h*w plane of channel c in sample n.
  double* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const double* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }
  /// Contiguous c*h*w block of sample n.
  double* sample(int n) { return data_.data() + index(n, 0, 0, 0); }
  const double* sample(int n) const { return data_.data() + index(n, 0, 0, 0); }
  size_t sample_size() const { return static_cast<size_t>(c_) * h_ * w_; }

  void fill(double v);
  void add(const Tensor& other);  // elementwise +=, shapes must match

  /// Samples [begin, begin + count) as a new tensor.
  Tensor slice(int begin, int count) const;
  /// Concatenates along the batch axis.
  static Tensor concat_batch(std::span<const Tensor> parts);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  AlignedBuffer data_;
};

}  // namespace geoshift

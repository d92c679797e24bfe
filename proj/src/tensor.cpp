#include "geoshift/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "geoshift/error.hpp"

namespace geoshift {

Tensor::Tensor(int n, int c, int h, int w, double fill) : n_(n), c_(c), h_(h), w_(w) {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw Error(Errc::shape, "negative tensor extent");
  data_.assign(static_cast<size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << n_ << "x" << c_ << "x" << h_ << "x" << w_;
  return os.str();
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add(const Tensor& other) {
  if (!same_shape(other)) throw Error(Errc::shape, "add: " + shape_string() + " vs " + other.shape_string());
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

Tensor Tensor::slice(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > n_) throw Error(Errc::shape, "slice out of range");
  Tensor out(count, c_, h_, w_);
  std::copy_n(sample(begin), static_cast<size_t>(count) * sample_size(), out.data());
  return out;
}

Tensor Tensor::concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  int total = 0;
  for (const auto& p : parts) {
    if (p.c_ != parts[0].c_ || p.h_ != parts[0].h_ || p.w_ != parts[0].w_)
      throw Error(Errc::shape, "concat_batch: mismatched sample shapes");
    total += p.n_;
  }
  Tensor out(total, parts[0].c_, parts[0].h_, parts[0].w_);
  double* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.data_.begin(), p.data_.end(), dst);
  return out;
}

}  // namespace geoshift

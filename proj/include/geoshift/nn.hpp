#pragma once

#include <functional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "geoshift/tensor.hpp"

namespace geoshift::nn {

/// Learnable tensor and its accumulated gradient.
struct Parameter {
  Tensor value;
  Tensor grad;

  explicit Parameter(Tensor v = {}) : value(std::move(v)), grad(value.n(), value.c(), value.h(), value.w()) {}
  void zero_grad() { grad.fill(0.0); }
};

enum class Mode { train, eval };

/// Visitor over named state. `grad` is null for non-learnable buffers
/// (batch-norm running statistics).
using StateVisitor = std::function<void(const std::string& name, Tensor& value, Tensor* grad)>;

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, std::mt19937_64& rng);

  Tensor forward(const Tensor& x);
  /// Returns dL/dx. Parameter gradients are accumulated only when
  /// `param_grads` is set; dL/dx is skipped when `input_grad` is false.
  Tensor backward(const Tensor& grad_y, bool param_grads, bool input_grad = true);
  void visit(const std::string& prefix, const StateVisitor& f);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }
  int out_extent(int in_extent) const { return (in_extent + 2 * pad_ - k_) / stride_ + 1; }

  Parameter weight;  // out x in x k x k
  Parameter bias;    // 1 x out x 1 x 1

 private:
  void im2col(const double* x, int h, int w, double* cols) const;
  void col2im(const double* cols, int h, int w, double* x) const;

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Tensor input_;
};

/// Per-channel batch normalization. Train mode uses batch statistics and
/// updates the running estimates; eval mode uses the running estimates.
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_y, bool param_grads);
  void visit(const std::string& prefix, const StateVisitor& f);

  Parameter gamma, beta;
  Tensor running_mean, running_var;

 private:
  double momentum_ = 0.1, eps_ = 1e-5;
  Mode last_mode_ = Mode::eval;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

class Relu {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_y) const;

 private:
  Tensor output_;
};

using Layer = std::variant<Conv2d, BatchNorm2d, Relu>;

/// Feed-forward chain with value semantics (copying a Sequential copies all
/// weights, which is how teacher models are cloned).
class Sequential {
 public:
  void add(Layer layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor& x, Mode mode);
  /// `input_grad` false lets the first layer skip its dL/dx.
  Tensor backward(const Tensor& grad_y, bool param_grads, bool input_grad = true);
  void visit(const std::string& prefix, const StateVisitor& f);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<Layer> layers_;
};

/// Appends conv(k x k) -> batch norm -> relu.
void add_conv_bn_relu(Sequential& seq, int in, int out, int kernel, int stride, std::mt19937_64& rng);

}  // namespace geoshift::nn

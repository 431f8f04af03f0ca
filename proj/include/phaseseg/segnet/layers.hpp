#pragma once

#include "phaseseg/rng.hpp"
#include "phaseseg/segnet/tensor.hpp"

#include <string>
#include <vector>

namespace phaseseg::segnet {

/// Square convolution with stride 1 and zero "same" padding (kernel 1 or 3).
/// Forward caches its input when asked so backward can rebuild the im2col
/// buffer instead of storing it.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel);

  /// He-normal weights, zero bias.
  void init(Rng& rng);
  void zero_init();

  Tensor<T> forward(const Tensor<T>& x, bool keep_cache);
  /// Accumulates parameter gradients; returns dL/dx unless skip_input_grad.
  Tensor<T> backward(const Tensor<T>& dy, bool skip_input_grad = false);

  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }
  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
  Parameter<T> weight_;  // out x (in * k * k)
  Parameter<T> bias_;    // out
  Tensor<T> cache_;
};

/// 2x2 transposed convolution with stride 2 (exact 2x upsampling).
template <typename T>
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(std::string name, int in_channels, int out_channels);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, bool keep_cache);
  Tensor<T> backward(const Tensor<T>& dy);

  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }

 private:
  int in_ = 0;
  int out_ = 0;
  Parameter<T> weight_;  // (out * 4) x in, row = o * 4 + dy * 2 + dx
  Parameter<T> bias_;    // out
  Tensor<T> cache_;
};

/// 2x2 max pooling with stride 2; H and W must be even.
template <typename T>
class MaxPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool keep_cache);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  int in_h_ = 0;
  int in_w_ = 0;
  std::vector<std::uint32_t> argmax_;
};

/// In-place ReLU; backward masks the gradient with the cached output.
template <typename T>
void relu_inplace(Tensor<T>& x);
template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& output);

/// Channel concatenation [a, b] and its split.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void split_channels(const Tensor<T>& g, int first_channels, Tensor<T>& ga, Tensor<T>& gb);

/// Reflect-101 padding on the bottom/right edges up to (h, w), and the
/// matching crop.
template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& x, int h, int w);
template <typename T>
Tensor<T> crop(const Tensor<T>& x, int h, int w);

}  // namespace phaseseg::segnet

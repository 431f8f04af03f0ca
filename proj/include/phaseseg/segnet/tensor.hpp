#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace phaseseg::segnet {

/// Allocator with a fixed 64-byte alignment. Vectorised reductions peel
/// leading elements up to the first aligned address, so a fixed base
/// alignment keeps summation order, and thus results, identical across runs.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

/// Dense NCHW tensor.
template <typename T>
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  Buffer<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T{0})
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const noexcept { return static_cast<std::size_t>(c) * plane(); }

  T* sample(int i) noexcept { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  const T* sample(int i) const noexcept {
    return data.data() + static_cast<std::size_t>(i) * sample_size();
  }
  std::span<T> sample_span(int i) noexcept { return {sample(i), sample_size()}; }
  std::span<const T> sample_span(int i) const noexcept { return {sample(i), sample_size()}; }

  T& at(int ni, int ci, int y, int x) noexcept {
    assert(ni < n && ci < c && y < h && x < w);
    return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }
  const T& at(int ni, int ci, int y, int x) const noexcept {
    assert(ni < n && ci < c && y < h && x < w);
    return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }

  bool same_shape(const Tensor& o) const noexcept {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  bool all_finite() const noexcept {
    for (const T& v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// A single K x H x W map (a Tensor with n == 1).
template <typename T>
using FeatureMap = Tensor<T>;

/// Learnable array with its gradient buffer.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  Buffer<T> value;
  Buffer<T> grad;

  Parameter() = default;
  Parameter(std::string name_, std::vector<int> shape_, T fill = T{0})
      : name(std::move(name_)), shape(std::move(shape_)) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    value.assign(count, fill);
    grad.assign(count, T{0});
  }

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }
};

}  // namespace phaseseg::segnet

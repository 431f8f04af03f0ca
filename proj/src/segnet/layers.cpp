#include "phaseseg/segnet/layers.hpp"

#include "phaseseg/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace phaseseg::segnet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// col has (C * k * k) rows of H * W columns.
template <typename T>
void im2col(const T* x, int C, int H, int W, int k, T* col) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          T* dst = row + static_cast<std::size_t>(y) * W;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= H || x_hi <= x_lo) {
            std::fill(dst, dst + W, T{0});
            continue;
          }
          std::fill(dst, dst + x_lo, T{0});
          std::memcpy(dst + x_lo, plane + static_cast<std::size_t>(sy) * W + x_lo + dx,
                      sizeof(T) * static_cast<std::size_t>(x_hi - x_lo));
          std::fill(dst + x_hi, dst + W, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int C, int H, int W, int k, T* dx) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  std::fill(dx, dx + static_cast<std::size_t>(C) * hw, T{0});
  for (int c = 0; c < C; ++c) {
    T* plane = dx + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const int ddx = kx - pad;
        const int x_lo = std::max(0, -ddx);
        const int x_hi = std::min(W, W - ddx);
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= H) continue;
          const T* src = row + static_cast<std::size_t>(y) * W;
          T* dst = plane + static_cast<std::size_t>(sy) * W + ddx;
          for (int x = x_lo; x < x_hi; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

template <typename T>
void he_normal(Parameter<T>& p, int fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : p.value) v = static_cast<T>(rng.normal() * std);
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, int kernel)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      weight_(name + ".weight", {out_channels, in_channels * kernel * kernel}),
      bias_(name + ".bias", {out_channels}) {
  if (kernel != 1 && kernel != 3) fail(ErrorKind::invalid_argument, "Conv2d supports kernel 1 or 3");
}

template <typename T>
void Conv2d<T>::init(Rng& rng) {
  he_normal(weight_, in_ * kernel_ * kernel_, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), T{0});
}

template <typename T>
void Conv2d<T>::zero_init() {
  std::fill(weight_.value.begin(), weight_.value.end(), T{0});
  std::fill(bias_.value.begin(), bias_.value.end(), T{0});
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, bool keep_cache) {
  if (x.c != in_) {
    fail(ErrorKind::shape_mismatch, weight_.name + ": expected " + std::to_string(in_) +
                                        " input channels, got " + std::to_string(x.c));
  }
  Tensor<T> y(x.n, out_, x.h, x.w);
  const int kk = in_ * kernel_ * kernel_;
  const auto hw = static_cast<Eigen::Index>(x.plane());
  ConstMatMap<T> w(weight_.value.data(), out_, kk);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_.value.data(), out_);
  Buffer<T> col;
  if (kernel_ != 1) col.resize(static_cast<std::size_t>(kk) * x.plane());
  for (int i = 0; i < x.n; ++i) {
    const T* src = x.sample(i);
    if (kernel_ != 1) {
      im2col(src, in_, x.h, x.w, kernel_, col.data());
      src = col.data();
    }
    ConstMatMap<T> cm(src, kk, hw);
    MatMap<T> out(y.sample(i), out_, hw);
    out.noalias() = w * cm;
    out.colwise() += b;
  }
  if (keep_cache) cache_ = x;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy, bool skip_input_grad) {
  const Tensor<T>& x = cache_;
  if (x.n != dy.n || dy.c != out_ || dy.h != x.h || dy.w != x.w) {
    fail(ErrorKind::shape_mismatch, weight_.name + ": backward without matching forward cache");
  }
  const int kk = in_ * kernel_ * kernel_;
  const auto hw = static_cast<Eigen::Index>(x.plane());
  ConstMatMap<T> w(weight_.value.data(), out_, kk);
  MatMap<T> dw(weight_.grad.data(), out_, kk);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias_.grad.data(), out_);
  Tensor<T> dx;
  if (!skip_input_grad) dx = Tensor<T>(x.n, in_, x.h, x.w);
  Buffer<T> col;
  Buffer<T> dcol;
  if (kernel_ != 1) {
    col.resize(static_cast<std::size_t>(kk) * x.plane());
    if (!skip_input_grad) dcol.resize(col.size());
  }
  for (int i = 0; i < x.n; ++i) {
    const T* src = x.sample(i);
    if (kernel_ != 1) {
      im2col(src, in_, x.h, x.w, kernel_, col.data());
      src = col.data();
    }
    ConstMatMap<T> cm(src, kk, hw);
    ConstMatMap<T> g(dy.sample(i), out_, hw);
    dw.noalias() += g * cm.transpose();
    db += g.rowwise().sum();
    if (skip_input_grad) continue;
    if (kernel_ == 1) {
      MatMap<T> dxm(dx.sample(i), in_, hw);
      dxm.noalias() = w.transpose() * g;
    } else {
      MatMap<T> dcm(dcol.data(), kk, hw);
      dcm.noalias() = w.transpose() * g;
      col2im(dcol.data(), in_, x.h, x.w, kernel_, dx.sample(i));
    }
  }
  cache_ = Tensor<T>();
  return dx;
}

template <typename T>
ConvTranspose2x2<T>::ConvTranspose2x2(std::string name, int in_channels, int out_channels)
    : in_(in_channels),
      out_(out_channels),
      weight_(name + ".weight", {out_channels * 4, in_channels}),
      bias_(name + ".bias", {out_channels}) {}

template <typename T>
void ConvTranspose2x2<T>::init(Rng& rng) {
  he_normal(weight_, in_, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), T{0});
}

template <typename T>
Tensor<T> ConvTranspose2x2<T>::forward(const Tensor<T>& x, bool keep_cache) {
  if (x.c != in_) fail(ErrorKind::shape_mismatch, weight_.name + ": input channel mismatch");
  Tensor<T> y(x.n, out_, x.h * 2, x.w * 2);
  const auto hw = static_cast<Eigen::Index>(x.plane());
  ConstMatMap<T> w(weight_.value.data(), out_ * 4, in_);
  RowMat<T> z(out_ * 4, hw);
  for (int i = 0; i < x.n; ++i) {
    ConstMatMap<T> xm(x.sample(i), in_, hw);
    z.noalias() = w * xm;
    for (int o = 0; o < out_; ++o) {
      const T b = bias_.value[static_cast<std::size_t>(o)];
      for (int d = 0; d < 4; ++d) {
        const int dy = d / 2;
        const int dx = d % 2;
        const T* zr = z.data() + static_cast<std::size_t>(o * 4 + d) * static_cast<std::size_t>(hw);
        for (int yy = 0; yy < x.h; ++yy)
          for (int xx = 0; xx < x.w; ++xx)
            y.at(i, o, 2 * yy + dy, 2 * xx + dx) = zr[yy * x.w + xx] + b;
      }
    }
  }
  if (keep_cache) cache_ = x;
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2x2<T>::backward(const Tensor<T>& dy) {
  const Tensor<T>& x = cache_;
  if (x.n != dy.n || dy.c != out_ || dy.h != 2 * x.h || dy.w != 2 * x.w) {
    fail(ErrorKind::shape_mismatch, weight_.name + ": backward without matching forward cache");
  }
  const auto hw = static_cast<Eigen::Index>(x.plane());
  ConstMatMap<T> w(weight_.value.data(), out_ * 4, in_);
  MatMap<T> dw(weight_.grad.data(), out_ * 4, in_);
  Tensor<T> dx(x.n, in_, x.h, x.w);
  RowMat<T> dz(out_ * 4, hw);
  for (int i = 0; i < x.n; ++i) {
    for (int o = 0; o < out_; ++o) {
      T bsum = 0;
      for (int d = 0; d < 4; ++d) {
        const int ddy = d / 2;
        const int ddx = d % 2;
        T* zr = dz.data() + static_cast<std::size_t>(o * 4 + d) * static_cast<std::size_t>(hw);
        for (int yy = 0; yy < x.h; ++yy)
          for (int xx = 0; xx < x.w; ++xx) {
            const T g = dy.at(i, o, 2 * yy + ddy, 2 * xx + ddx);
            zr[yy * x.w + xx] = g;
            bsum += g;
          }
      }
      bias_.grad[static_cast<std::size_t>(o)] += bsum;
    }
    ConstMatMap<T> xm(x.sample(i), in_, hw);
    dw.noalias() += dz * xm.transpose();
    MatMap<T> dxm(dx.sample(i), in_, hw);
    dxm.noalias() = w.transpose() * dz;
  }
  cache_ = Tensor<T>();
  return dx;
}

template <typename T>
Tensor<T> MaxPool2<T>::forward(const Tensor<T>& x, bool keep_cache) {
  if (x.h % 2 != 0 || x.w % 2 != 0) {
    fail(ErrorKind::shape_mismatch, "MaxPool2 needs even spatial dimensions");
  }
  Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
  if (keep_cache) {
    argmax_.assign(y.size(), 0);
    in_h_ = x.h;
    in_w_ = x.w;
  }
  std::size_t out_idx = 0;
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      const T* plane = x.sample(i) + static_cast<std::size_t>(c) * x.plane();
      for (int yy = 0; yy < y.h; ++yy) {
        for (int xx = 0; xx < y.w; ++xx, ++out_idx) {
          std::uint32_t best = static_cast<std::uint32_t>((2 * yy) * x.w + 2 * xx);
          for (std::uint32_t cand : {best + 1, best + static_cast<std::uint32_t>(x.w),
                                     best + static_cast<std::uint32_t>(x.w) + 1}) {
            if (plane[cand] > plane[best]) best = cand;
          }
          y.data[out_idx] = plane[best];
          if (keep_cache) argmax_[out_idx] = best;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2<T>::backward(const Tensor<T>& dy) {
  if (argmax_.size() != dy.size()) fail(ErrorKind::shape_mismatch, "MaxPool2 backward without cache");
  Tensor<T> dx(dy.n, dy.c, in_h_, in_w_);
  const std::size_t in_plane = static_cast<std::size_t>(in_h_) * in_w_;
  const std::size_t out_plane = dy.plane();
  for (std::size_t idx = 0; idx < dy.size(); ++idx) {
    const std::size_t nc = idx / out_plane;
    dx.data[nc * in_plane + argmax_[idx]] += dy.data[idx];
  }
  argmax_.clear();
  return dx;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.data) v = v > T{0} ? v : T{0};
}

template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& output) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(output.data[i] > T{0})) grad.data[i] = T{0};
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) fail(ErrorKind::shape_mismatch, "concat: shapes differ");
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy_n(a.sample(i), a.sample_size(), out.sample(i));
    std::copy_n(b.sample(i), b.sample_size(), out.sample(i) + a.sample_size());
  }
  return out;
}

template <typename T>
void split_channels(const Tensor<T>& g, int first_channels, Tensor<T>& ga, Tensor<T>& gb) {
  ga = Tensor<T>(g.n, first_channels, g.h, g.w);
  gb = Tensor<T>(g.n, g.c - first_channels, g.h, g.w);
  for (int i = 0; i < g.n; ++i) {
    std::copy_n(g.sample(i), ga.sample_size(), ga.sample(i));
    std::copy_n(g.sample(i) + ga.sample_size(), gb.sample_size(), gb.sample(i));
  }
}

template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& x, int h, int w) {
  if (h == x.h && w == x.w) return x;
  if (h < x.h || w < x.w || h - x.h >= x.h || w - x.w >= x.w) {
    fail(ErrorKind::shape_mismatch, "pad_reflect: padding larger than the input");
  }
  auto reflect = [](int i, int n) { return i < n ? i : 2 * n - 2 - i; };
  Tensor<T> out(x.n, x.c, h, w);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) out.at(i, c, y, xx) = x.at(i, c, reflect(y, x.h), reflect(xx, x.w));
  return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, int h, int w) {
  if (h == x.h && w == x.w) return x;
  Tensor<T> out(x.n, x.c, h, w);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < h; ++y)
        std::copy_n(&x.at(i, c, y, 0), w, &out.at(i, c, y, 0));
  return out;
}

#define PHASESEG_INSTANTIATE(T)                                                              \
  template class Conv2d<T>;                                                                  \
  template class ConvTranspose2x2<T>;                                                        \
  template class MaxPool2<T>;                                                                \
  template void relu_inplace<T>(Tensor<T>&);                                                 \
  template void relu_backward_inplace<T>(Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template void split_channels<T>(const Tensor<T>&, int, Tensor<T>&, Tensor<T>&);            \
  template Tensor<T> pad_reflect<T>(const Tensor<T>&, int, int);                             \
  template Tensor<T> crop<T>(const Tensor<T>&, int, int);

PHASESEG_INSTANTIATE(float)
PHASESEG_INSTANTIATE(double)

#undef PHASESEG_INSTANTIATE

}  // namespace phaseseg::segnet

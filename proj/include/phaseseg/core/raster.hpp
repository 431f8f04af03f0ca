#pragma once

#include <cassert>
#include <cstdint>
#include <span>
#include <vector>

namespace phaseseg {

/// Dense row-major raster with interleaved channels.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int channels = 1, T fill = T{})
      : width_(width),
        height_(height),
        channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * height_;
  }

  T& at(int y, int x, int c = 0) {
    assert(y >= 0 && y < height_ && x >= 0 && x < width_ && c >= 0 && c < channels_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  const T& at(int y, int x, int c = 0) const {
    assert(y >= 0 && y < height_ && x >= 0 && x < width_ && c >= 0 && c < channels_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  bool same_shape(const Raster& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

/// 8-bit RGB (or grayscale) frame.
using Image = Raster<std::uint8_t>;

/// Single-channel map of class ids: 0 is background, 1..C are tools.
class LabelMap : public Raster<std::uint8_t> {
 public:
  LabelMap() = default;
  LabelMap(int width, int height, std::uint8_t fill = 0)
      : Raster<std::uint8_t>(width, height, 1, fill) {}
  explicit LabelMap(Raster<std::uint8_t> raster) : Raster<std::uint8_t>(std::move(raster)) {
    assert(channels() == 1 || empty());
  }

  std::uint8_t& operator()(int y, int x) { return at(y, x); }
  std::uint8_t operator()(int y, int x) const { return at(y, x); }
};

/// Area-averaged downsampling; output dimensions are floored and trailing
/// rows/columns that do not fill a whole block are dropped.
Image downscale_frame(const Image& image, int factor);

/// Nearest-neighbour downsampling for class maps (ids are never blended).
/// Each output pixel takes the source pixel at the block centre.
LabelMap downscale_frame(const LabelMap& labels, int factor);

}  // namespace phaseseg

#pragma once

#include "phaseseg/core/raster.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace phaseseg {

/// H x W boolean grid stored one byte per pixel (0 or 1).
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, bool fill = false)
      : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

  /// Pixels of `labels` equal to `class_id`.
  static BinaryMask from_labels(const LabelMap& labels, int class_id);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }
  bool empty_shape() const noexcept { return bits_.empty(); }

  bool get(int y, int x) const { return bits_[index(y, x)] != 0; }
  void set(int y, int x, bool v = true) { bits_[index(y, x)] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set_flat(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

  std::size_t count() const noexcept;
  bool any() const noexcept { return count() > 0; }
  bool same_shape(const BinaryMask& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }

  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Throws shape_mismatch naming `what` when the masks differ in size.
void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what);

}  // namespace phaseseg

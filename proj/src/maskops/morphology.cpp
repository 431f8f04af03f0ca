#include "phaseseg/maskops/morphology.hpp"

#include "phaseseg/error.hpp"

#include <algorithm>
#include <string>

namespace phaseseg {

namespace {

// One pass of a running min (erode) or max (dilate) along rows or columns.
// The window is clipped at the border, which keeps erosion and dilation an
// adjoint pair so opening and closing stay idempotent.
BinaryMask pass(const BinaryMask& in, int radius, bool horizontal, bool is_max) {
  const int h = in.height();
  const int w = in.width();
  BinaryMask out(h, w);
  const int lines = horizontal ? h : w;
  const int len = horizontal ? w : h;
  std::vector<int> prefix(static_cast<std::size_t>(len) + 1);
  for (int line = 0; line < lines; ++line) {
    prefix[0] = 0;
    for (int i = 0; i < len; ++i) {
      const bool v = horizontal ? in.get(line, i) : in.get(i, line);
      prefix[static_cast<std::size_t>(i) + 1] = prefix[static_cast<std::size_t>(i)] + (v ? 1 : 0);
    }
    for (int i = 0; i < len; ++i) {
      const int lo = std::max(0, i - radius);
      const int hi = std::min(len - 1, i + radius);
      const int ones = prefix[static_cast<std::size_t>(hi) + 1] - prefix[static_cast<std::size_t>(lo)];
      const bool v = is_max ? ones > 0 : ones == hi - lo + 1;
      if (horizontal) out.set(line, i, v);
      else out.set(i, line, v);
    }
  }
  return out;
}

void check_radius(int radius) {
  if (radius < 1) fail(ErrorKind::invalid_argument, "morphology radius must be >= 1, got " + std::to_string(radius));
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int radius) {
  check_radius(radius);
  return pass(pass(mask, radius, true, false), radius, false, false);
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  check_radius(radius);
  return pass(pass(mask, radius, true, true), radius, false, true);
}

BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius) {
  switch (op) {
    case MorphOp::open: return dilate(erode(mask, radius), radius);
    case MorphOp::close: return erode(dilate(mask, radius), radius);
  }
  return mask;
}

}  // namespace phaseseg

#include "phaseseg/core/raster.hpp"

#include "phaseseg/error.hpp"

#include <string>

namespace phaseseg {

namespace {

void check_factor(int factor, int width, int height) {
  if (factor < 1) {
    fail(ErrorKind::invalid_argument,
         "downscale factor must be >= 1, got " + std::to_string(factor));
  }
  if (width / factor < 1 || height / factor < 1) {
    fail(ErrorKind::invalid_argument, "downscale factor " + std::to_string(factor) +
                                          " exceeds raster size " + std::to_string(width) +
                                          "x" + std::to_string(height));
  }
}

}  // namespace

Image downscale_frame(const Image& image, int factor) {
  check_factor(factor, image.width(), image.height());
  if (factor == 1) return image;
  const int out_w = image.width() / factor;
  const int out_h = image.height() / factor;
  const int channels = image.channels();
  Image out(out_w, out_h, channels);
  const int area = factor * factor;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      for (int c = 0; c < channels; ++c) {
        int sum = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            sum += image.at(y * factor + dy, x * factor + dx, c);
        // Round half up.
        out.at(y, x, c) = static_cast<std::uint8_t>((sum + area / 2) / area);
      }
    }
  }
  return out;
}

LabelMap downscale_frame(const LabelMap& labels, int factor) {
  check_factor(factor, labels.width(), labels.height());
  if (factor == 1) return labels;
  const int out_w = labels.width() / factor;
  const int out_h = labels.height() / factor;
  LabelMap out(out_w, out_h);
  const int centre = factor / 2;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      out(y, x) = labels(y * factor + centre, x * factor + centre);
  return out;
}

}  // namespace phaseseg

#include "phaseseg/maskops/denoise.hpp"

#include "phaseseg/error.hpp"
#include "phaseseg/maskops/morphology.hpp"

#include <cmath>
#include <string>

namespace phaseseg {

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

std::vector<double> gaussian_blur(const BinaryMask& mask, int kernel, double sigma) {
  if (kernel < 1 || kernel % 2 == 0) {
    fail(ErrorKind::invalid_argument, "blur kernel must be odd and positive, got " + std::to_string(kernel));
  }
  const int r = kernel / 2;
  std::vector<double> weights(static_cast<std::size_t>(kernel));
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    weights[static_cast<std::size_t>(i + r)] = v;
    total += v;
  }
  for (auto& v : weights) v /= total;

  const int h = mask.height();
  const int w = mask.width();
  std::vector<double> tmp(mask.size());
  std::vector<double> out(mask.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        if (mask.get(y, reflect101(x + i, w))) acc += weights[static_cast<std::size_t>(i + r)];
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += weights[static_cast<std::size_t>(i + r)] *
               tmp[static_cast<std::size_t>(reflect101(y + i, h) * w + x)];
      out[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  return out;
}

BinaryMask denoise_mask(const BinaryMask& mask, const DenoiseOptions& opt) {
  if (opt.blur_kernel < 1 || opt.blur_kernel % 2 == 0) {
    fail(ErrorKind::invalid_argument,
         "blur kernel must be odd and positive, got " + std::to_string(opt.blur_kernel));
  }
  BinaryMask m = morph(mask, MorphOp::open, opt.morph_radius);
  m = morph(m, MorphOp::close, opt.morph_radius);
  m = remove_small_components(m, opt.min_area, opt.min_fraction, opt.connectivity);
  if (!m.any()) return m;

  const auto field = gaussian_blur(m, opt.blur_kernel, opt.blur_kernel / 6.0);
  BinaryMask smoothed(m.height(), m.width());
  for (std::size_t i = 0; i < field.size(); ++i) smoothed.set_flat(i, field[i] >= opt.blur_threshold);
  return remove_small_components(smoothed, opt.min_area, opt.min_fraction, opt.connectivity);
}

}  // namespace phaseseg

#pragma once

#include "phaseseg/maskops/binary_mask.hpp"
#include "phaseseg/maskops/components.hpp"

#include <cstddef>
#include <vector>

namespace phaseseg {

struct DenoiseOptions {
  std::size_t min_area = 100;
  double min_fraction = 0.10;
  /// Odd kernel side; sigma = blur_kernel / 6.
  int blur_kernel = 25;
  double blur_threshold = 0.5;
  int morph_radius = 1;
  Connectivity connectivity = Connectivity::eight;
};

/// open -> close -> drop small components -> Gaussian blur of the 0/1 field ->
/// re-binarise at blur_threshold -> drop components that fell below either
/// area threshold during smoothing.
BinaryMask denoise_mask(const BinaryMask& mask, const DenoiseOptions& options = {});

/// Separable Gaussian blur of a 0/1 field with reflect-101 borders.
std::vector<double> gaussian_blur(const BinaryMask& mask, int kernel, double sigma);

}  // namespace phaseseg

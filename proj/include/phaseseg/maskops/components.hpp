#pragma once

#include "phaseseg/maskops/binary_mask.hpp"

#include <cstddef>
#include <vector>

namespace phaseseg {

enum class Connectivity { four = 4, eight = 8 };

struct Component {
  BinaryMask mask;
  std::size_t area = 0;
};

/// Label image (0 = background, 1..n = component) plus per-component areas
/// (areas[k-1] is the area of label k). Components are numbered in raster
/// order of their first pixel.
struct ComponentLabels {
  std::vector<int> labels;
  std::vector<std::size_t> areas;
};

ComponentLabels label_components(const BinaryMask& mask, Connectivity connectivity);

/// Exhaustive, disjoint components in raster order.
std::vector<Component> connected_components(const BinaryMask& mask,
                                            Connectivity connectivity = Connectivity::eight);

/// Drops every component with area < min_area or area < min_fraction * total
/// foreground. Returns the filtered mask.
BinaryMask remove_small_components(const BinaryMask& mask, std::size_t min_area,
                                   double min_fraction,
                                   Connectivity connectivity = Connectivity::eight);

}  // namespace phaseseg

#include "phaseseg/maskops/components.hpp"

#include <vector>

namespace phaseseg {

ComponentLabels label_components(const BinaryMask& mask, Connectivity connectivity) {
  const int h = mask.height();
  const int w = mask.width();
  ComponentLabels out;
  out.labels.assign(mask.size(), 0);
  std::vector<int> stack;
  const bool eight = connectivity == Connectivity::eight;
  int next = 0;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const int start = y0 * w + x0;
      if (!mask[static_cast<std::size_t>(start)] || out.labels[static_cast<std::size_t>(start)] != 0) continue;
      ++next;
      std::size_t area = 0;
      out.labels[static_cast<std::size_t>(start)] = next;
      stack.push_back(start);
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        ++area;
        const int y = p / w;
        const int x = p % w;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (!eight && dx != 0 && dy != 0) continue;
            const int ny = y + dy;
            const int nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const auto q = static_cast<std::size_t>(ny * w + nx);
            if (mask[q] && out.labels[q] == 0) {
              out.labels[q] = next;
              stack.push_back(static_cast<int>(q));
            }
          }
        }
      }
      out.areas.push_back(area);
    }
  }
  return out;
}

std::vector<Component> connected_components(const BinaryMask& mask, Connectivity connectivity) {
  const ComponentLabels cl = label_components(mask, connectivity);
  std::vector<Component> out(cl.areas.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].mask = BinaryMask(mask.height(), mask.width());
    out[k].area = cl.areas[k];
  }
  for (std::size_t i = 0; i < cl.labels.size(); ++i)
    if (cl.labels[i] > 0) out[static_cast<std::size_t>(cl.labels[i] - 1)].mask.set_flat(i, true);
  return out;
}

BinaryMask remove_small_components(const BinaryMask& mask, std::size_t min_area,
                                   double min_fraction, Connectivity connectivity) {
  const ComponentLabels cl = label_components(mask, connectivity);
  std::size_t total = 0;
  for (auto a : cl.areas) total += a;
  const double fraction_floor = min_fraction * static_cast<double>(total);
  std::vector<bool> keep(cl.areas.size());
  for (std::size_t k = 0; k < cl.areas.size(); ++k) {
    const auto a = cl.areas[k];
    keep[k] = a >= min_area && static_cast<double>(a) >= fraction_floor;
  }
  BinaryMask out(mask.height(), mask.width());
  for (std::size_t i = 0; i < cl.labels.size(); ++i)
    if (cl.labels[i] > 0 && keep[static_cast<std::size_t>(cl.labels[i] - 1)]) out.set_flat(i, true);
  return out;
}

}  // namespace phaseseg

#include "phaseseg/maskops/binary_mask.hpp"

#include "phaseseg/error.hpp"

#include <numeric>
#include <string>

namespace phaseseg {

BinaryMask BinaryMask::from_labels(const LabelMap& labels, int class_id) {
  BinaryMask m(labels.height(), labels.width());
  const auto data = labels.data();
  for (std::size_t i = 0; i < data.size(); ++i) m.bits_[i] = data[i] == class_id ? 1 : 0;
  return m;
}

std::size_t BinaryMask::count() const noexcept {
  return std::accumulate(bits_.begin(), bits_.end(), std::size_t{0});
}

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::shape_mismatch, std::string(what) + ": mask shapes differ (" +
                                        std::to_string(a.height()) + "x" +
                                        std::to_string(a.width()) + " vs " +
                                        std::to_string(b.height()) + "x" +
                                        std::to_string(b.width()) + ")");
  }
}

}  // namespace phaseseg

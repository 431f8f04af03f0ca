#include "phaseseg/segnet/pcd.hpp"

namespace phaseseg::segnet {

std::string_view to_string(PcdMode mode) noexcept {
  switch (mode) {
    case PcdMode::none: return "none";
    case PcdMode::basic: return "basic";
    case PcdMode::gated: return "gated";
  }
  return "none";
}

PcdMode pcd_mode_from_string(std::string_view s) {
  if (s == "none") return PcdMode::none;
  if (s == "basic") return PcdMode::basic;
  if (s == "gated") return PcdMode::gated;
  fail(ErrorKind::invalid_argument, "unknown pcd mode '" + std::string(s) + "'");
}

}  // namespace phaseseg::segnet

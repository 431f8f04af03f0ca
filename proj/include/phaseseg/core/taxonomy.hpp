#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace phaseseg {

using ClassId = int;
using PhaseId = int;

/// Sentinel for frames whose phase is unknown. It is a valid conditioning
/// input everywhere and maps to its own embedding row in the network.
inline constexpr PhaseId kNullPhase = -1;

struct NamedId {
  int id = 0;
  std::string name;

  friend bool operator==(const NamedId&, const NamedId&) = default;
};

/// Tool classes 1..C; background is the implicit class 0.
struct ToolTaxonomy {
  std::vector<NamedId> classes;

  static ToolTaxonomy from_names(const std::vector<std::string>& names);

  int num_tools() const noexcept { return static_cast<int>(classes.size()); }
  /// Tools plus background.
  int num_labels() const noexcept { return num_tools() + 1; }
  const std::string& name_of(ClassId id) const;

  /// Throws a validation error when ids are not 1..C or names repeat.
  void validate() const;
  std::uint64_t fingerprint() const;

  friend bool operator==(const ToolTaxonomy&, const ToolTaxonomy&) = default;
};

/// Phases 0..P-1 plus the reserved kNullPhase.
struct PhaseTaxonomy {
  std::vector<NamedId> phases;

  static PhaseTaxonomy from_names(const std::vector<std::string>& names);

  int num_phases() const noexcept { return static_cast<int>(phases.size()); }
  bool contains(PhaseId id) const noexcept {
    return id == kNullPhase || (id >= 0 && id < num_phases());
  }
  void validate() const;
  std::uint64_t fingerprint() const;

  friend bool operator==(const PhaseTaxonomy&, const PhaseTaxonomy&) = default;
};

}  // namespace phaseseg

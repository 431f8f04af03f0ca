#pragma once

#include "phaseseg/core/manifest.hpp"
#include "phaseseg/core/raster.hpp"

#include <vector>

namespace phaseseg {

enum class CooccurrenceNorm { none, by_phase };

/// P x C table; entry (p, c) counts frames of phase p that contain at least
/// one pixel of tool c (or the row-normalised ratio).
struct CooccurrenceMatrix {
  int num_phases = 0;
  int num_tools = 0;
  std::vector<double> values;

  CooccurrenceMatrix(int phases, int tools)
      : num_phases(phases), num_tools(tools), values(static_cast<std::size_t>(phases) * tools, 0.0) {}

  double& at(PhaseId p, ClassId c) { return values[static_cast<std::size_t>(p) * num_tools + (c - 1)]; }
  double at(PhaseId p, ClassId c) const {
    return values[static_cast<std::size_t>(p) * num_tools + (c - 1)];
  }

  /// Adds one labelled frame. Frames with kNullPhase have no row and are ignored.
  void add_frame(PhaseId phase, const LabelMap& labels);
  void normalize_rows();
};

/// Reads every labelled frame of the manifest; frames with provenance none
/// are skipped.
CooccurrenceMatrix cooccurrence_matrix(const DatasetManifest& manifest, CooccurrenceNorm norm);

}  // namespace phaseseg

#pragma once

#include "phaseseg/core/taxonomy.hpp"

#include <string>
#include <vector>

namespace phaseseg {

/// Half-open frame interval [start, end) annotated with one phase.
struct PhaseSegment {
  int start = 0;
  int end = 0;
  PhaseId phase = kNullPhase;

  friend bool operator==(const PhaseSegment&, const PhaseSegment&) = default;
};

/// Per-video phase annotation at native frame indexing. Frames not covered by
/// any segment resolve to kNullPhase.
struct PhaseTrack {
  std::string video_id;
  int num_frames = 0;
  std::vector<PhaseSegment> segments;

  /// Segments sorted, non-overlapping, inside [0, num_frames) and referring
  /// to phases of the taxonomy.
  void validate(const PhaseTaxonomy& phases) const;

  friend bool operator==(const PhaseTrack&, const PhaseTrack&) = default;
};

/// Phase of the segment covering frame_index, or kNullPhase for gaps.
/// Throws invalid_argument when frame_index is outside the video.
PhaseId phase_of_frame(const PhaseTrack& track, int frame_index);

}  // namespace phaseseg

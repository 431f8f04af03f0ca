#include "phaseseg/core/taxonomy.hpp"

#include "phaseseg/core/phase_track.hpp"
#include "phaseseg/error.hpp"
#include "phaseseg/rng.hpp"

#include <algorithm>
#include <set>

namespace phaseseg {

namespace {

void validate_ids(const std::vector<NamedId>& items, int first_id, const char* what) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id != first_id + static_cast<int>(i)) {
      fail(ErrorKind::validation, std::string(what) + " ids must be contiguous from " +
                                      std::to_string(first_id) + "; entry " +
                                      std::to_string(i) + " has id " +
                                      std::to_string(items[i].id));
    }
    if (!names.insert(items[i].name).second) {
      fail(ErrorKind::validation,
           std::string(what) + " name '" + items[i].name + "' is not unique");
    }
  }
}

std::uint64_t fingerprint_of(const std::vector<NamedId>& items, std::string_view tag) {
  std::string blob(tag);
  for (const auto& item : items) {
    blob += '|';
    blob += std::to_string(item.id);
    blob += ':';
    blob += item.name;
  }
  return fnv1a64(blob);
}

}  // namespace

ToolTaxonomy ToolTaxonomy::from_names(const std::vector<std::string>& names) {
  ToolTaxonomy t;
  for (std::size_t i = 0; i < names.size(); ++i)
    t.classes.push_back({static_cast<int>(i) + 1, names[i]});
  return t;
}

const std::string& ToolTaxonomy::name_of(ClassId id) const {
  if (id < 1 || id > num_tools()) {
    fail(ErrorKind::invalid_argument, "unknown tool class id " + std::to_string(id));
  }
  return classes[static_cast<std::size_t>(id - 1)].name;
}

void ToolTaxonomy::validate() const {
  if (classes.empty()) fail(ErrorKind::validation, "tool taxonomy needs at least one class");
  if (classes.size() > 255) fail(ErrorKind::validation, "tool taxonomy exceeds 255 classes");
  validate_ids(classes, 1, "tool class");
}

std::uint64_t ToolTaxonomy::fingerprint() const { return fingerprint_of(classes, "tools"); }

PhaseTaxonomy PhaseTaxonomy::from_names(const std::vector<std::string>& names) {
  PhaseTaxonomy t;
  for (std::size_t i = 0; i < names.size(); ++i)
    t.phases.push_back({static_cast<int>(i), names[i]});
  return t;
}

void PhaseTaxonomy::validate() const {
  if (phases.empty()) fail(ErrorKind::validation, "phase taxonomy needs at least one phase");
  validate_ids(phases, 0, "phase");
}

std::uint64_t PhaseTaxonomy::fingerprint() const { return fingerprint_of(phases, "phases"); }

void PhaseTrack::validate(const PhaseTaxonomy& taxonomy) const {
  if (num_frames <= 0) {
    fail(ErrorKind::validation, "phase track for video " + video_id + " has no frames");
  }
  int cursor = 0;
  for (const auto& seg : segments) {
    if (seg.start < cursor || seg.end <= seg.start || seg.end > num_frames) {
      fail(ErrorKind::validation, "phase track for video " + video_id +
                                      " has an unsorted, overlapping, empty or out-of-range "
                                      "segment [" +
                                      std::to_string(seg.start) + ", " +
                                      std::to_string(seg.end) + ")");
    }
    if (seg.phase == kNullPhase || !taxonomy.contains(seg.phase)) {
      fail(ErrorKind::validation, "phase track for video " + video_id +
                                      " references unknown phase " +
                                      std::to_string(seg.phase));
    }
    cursor = seg.end;
  }
}

PhaseId phase_of_frame(const PhaseTrack& track, int frame_index) {
  if (frame_index < 0 || frame_index >= track.num_frames) {
    fail(ErrorKind::invalid_argument, "frame " + std::to_string(frame_index) +
                                          " is outside video " + track.video_id + " (" +
                                          std::to_string(track.num_frames) + " frames)");
  }
  auto it = std::upper_bound(
      track.segments.begin(), track.segments.end(), frame_index,
      [](int frame, const PhaseSegment& seg) { return frame < seg.start; });
  if (it == track.segments.begin()) return kNullPhase;
  --it;
  return frame_index < it->end ? it->phase : kNullPhase;
}

}  // namespace phaseseg

#pragma once

#include "phaseseg/core/phase_track.hpp"
#include "phaseseg/core/taxonomy.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace phaseseg {

enum class Provenance { human, pseudo, none };

std::string_view to_string(Provenance p) noexcept;
Provenance provenance_from_string(std::string_view s);

struct Resolution {
  int width = 0;
  int height = 0;

  friend bool operator==(const Resolution&, const Resolution&) = default;
};

/// One extracted frame. Paths are stored as written in frames.jsonl and
/// resolved against the manifest root directory.
struct FrameRecord {
  std::string video_id;
  int frame_index = 0;
  std::filesystem::path image_path;
  int width = 0;
  int height = 0;
  PhaseId phase_id = kNullPhase;
  std::optional<std::filesystem::path> label_map_path;
  Provenance provenance = Provenance::none;

  bool labeled() const noexcept { return provenance != Provenance::none; }

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

/// Index of videos, frames, label maps and phase tracks. On disk it is a
/// `manifest.json` (taxonomies, resolutions, tracks) plus an append-friendly
/// `frames.jsonl` with one FrameRecord per line.
struct DatasetManifest {
  ToolTaxonomy tools;
  PhaseTaxonomy phases;
  std::vector<FrameRecord> frames;
  std::vector<PhaseTrack> tracks;
  Resolution native_resolution;
  Resolution working_resolution;
  /// Directory that relative paths are resolved against.
  std::filesystem::path root;

  const PhaseTrack* track(const std::string& video_id) const;
  const FrameRecord* find_frame(const std::string& video_id, int frame_index) const;
  /// Sorted unique video ids taken from the phase tracks.
  std::vector<std::string> video_ids() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kFramesFile = "frames.jsonl";

/// Accepts either the manifest.json path or the directory containing it.
/// The result is fully validated, including file existence.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes manifest.json + frames.jsonl into `dir` with sorted keys. Frame
/// paths are rewritten relative to `dir`.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir);

/// Checks every manifest invariant and throws a validation error naming the
/// first violation. With check_files, referenced files must exist and label
/// maps must match the frame geometry.
void validate_manifest(const DatasetManifest& manifest, bool check_files = true);

nlohmann::json phase_track_to_json(const PhaseTrack& track);
PhaseTrack phase_track_from_json(const nlohmann::json& j);

/// Predicted-phase files: one `<video_id>.json` per video in a directory.
void save_phase_track(const PhaseTrack& track, const std::filesystem::path& path);
PhaseTrack load_phase_track(const std::filesystem::path& path);

}  // namespace phaseseg

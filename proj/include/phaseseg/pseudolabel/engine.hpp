#pragma once

#include "phaseseg/core/manifest.hpp"
#include "phaseseg/pseudolabel/prompts.hpp"
#include "phaseseg/pseudolabel/segmenter.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace phaseseg::pseudo {

enum class Direction { forward, backward };
std::string_view to_string(Direction d) noexcept;

struct PseudoOptions {
  int stride = 30;
  int horizon = 90;
  int max_rounds = 3;
  double target_iou = 0.95;
  double min_source_iou = 0.5;
  /// Seed propagation with the mask elicited at the anchor instead of the
  /// retained points.
  bool seed_from_mask = false;
  std::uint64_t seed = 0;
};

struct PseudoLabelRecord {
  FrameRef source;
  int target_frame_index = 0;
  ClassId class_id = 0;
  BinaryMask mask;
  std::filesystem::path mask_path;
  double prompt_score_at_source = 0.0;
  Direction direction = Direction::forward;
};

/// Why a candidate pseudo label was not produced or not used.
struct Exclusion {
  FrameRef source;
  int target_frame_index = -1;  // -1 when the whole tool was skipped
  ClassId class_id = 0;
  std::string reason;
};

/// Best-so-far refinement. Each round re-predicts from the current best set,
/// samples two points from every nonempty tp/fn (positive) and fp/tn
/// (negative) region and scores the new set; stops early at target_iou.
PromptSet refine_prompts(PromptableSegmenter& segmenter, const FrameRef& frame, const BinaryMask& gt,
                         const PromptSet& initial, int max_rounds = 3, double target_iou = 0.95,
                         std::uint64_t seed = 0);

/// One record per (qualifying tool, offset) with a nonempty propagated mask.
/// Offsets lacking a manifest frame are skipped with a warning.
std::vector<PseudoLabelRecord> propagate_labels(PromptableSegmenter& segmenter, const DatasetManifest& manifest,
                                                const FrameRef& anchor, const std::vector<PromptSet>& best,
                                                const PseudoOptions& options,
                                                std::vector<Exclusion>* exclusions = nullptr);

/// Per-tool masks merged into one label map; overlapping pixels go to the
/// tool with the smaller total area (ties to the lower id).
LabelMap merge_tool_masks(const std::vector<const PseudoLabelRecord*>& records, int width, int height);

/// New pseudo frames for the targets, written as label PNGs under
/// `label_dir`. The closest anchor wins a target (ties to the earlier
/// anchor) and human-labeled frames are never touched.
DatasetManifest assemble_pseudo_dataset(const DatasetManifest& manifest, const std::vector<PseudoLabelRecord>& records,
                                        const std::filesystem::path& label_dir,
                                        std::vector<Exclusion>* exclusions = nullptr);

struct PseudoRunResult {
  DatasetManifest manifest;
  std::vector<PromptSet> prompt_sets;
  std::vector<PseudoLabelRecord> records;
  std::vector<Exclusion> exclusions;
};

/// Whole engine: every human frame is an anchor, every tool in its label
/// map is prompted, refined and propagated. Writes the augmented manifest,
/// pseudo_records.jsonl, pseudo_exclusions.jsonl, pseudo_masks/ and
/// pseudo_labels/ into `out_dir`.
PseudoRunResult run_pseudo_pipeline(const DatasetManifest& manifest, PromptableSegmenter& segmenter,
                                    const PseudoOptions& options, const std::filesystem::path& out_dir);

nlohmann::json record_to_json(const PseudoLabelRecord& r);
nlohmann::json exclusion_to_json(const Exclusion& e);

inline constexpr const char* kRecordsFile = "pseudo_records.jsonl";
inline constexpr const char* kExclusionsFile = "pseudo_exclusions.jsonl";

}  // namespace phaseseg::pseudo

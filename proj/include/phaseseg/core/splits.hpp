#pragma once

#include "phaseseg/core/manifest.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace phaseseg {

struct Fold {
  std::vector<std::string> test_videos;
  std::vector<std::string> train_videos;
  std::vector<std::string> val_videos;

  friend bool operator==(const Fold&, const Fold&) = default;
};

/// Video-level k-fold plan. Test sets partition the videos; within a fold the
/// remaining videos are split train:val.
struct SplitPlan {
  std::vector<Fold> folds;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// Test-set sizes differ by at most one video; each fold takes
/// ceil(val_fraction * remaining) validation videos (at least one train video
/// is always kept). Deterministic in `seed`.
SplitPlan generate_splits(std::vector<std::string> videos, int n_folds, double val_fraction,
                          std::uint64_t seed);
SplitPlan generate_splits(const DatasetManifest& manifest, int n_folds, double val_fraction,
                          std::uint64_t seed);

/// Throws validation when a fold overlaps itself, misses a video, or when the
/// test sets overlap or fail to cover `videos`.
void validate_split(const SplitPlan& plan, const std::vector<std::string>& videos);

nlohmann::json split_to_json(const SplitPlan& plan);
SplitPlan split_from_json(const nlohmann::json& j);
void save_split(const SplitPlan& plan, const std::filesystem::path& path);
SplitPlan load_split(const std::filesystem::path& path);

}  // namespace phaseseg

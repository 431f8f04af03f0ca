#pragma once

#include "phaseseg/core/splits.hpp"
#include "phaseseg/trainer/report.hpp"
#include "phaseseg/trainer/train.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace phaseseg::trainer {

struct CellFailure {
  Variant variant = Variant::v0;
  int fold_id = 0;
  std::string kind;
  std::string message;
};

struct GridOptions {
  /// Folds to run; empty means all.
  std::vector<int> folds;
  /// Reuse finished cells and resume interrupted ones.
  bool resume = true;
  std::ostream* log = nullptr;
};

struct GridResult {
  std::vector<EvalReport> reports;
  std::vector<CellFailure> failures;
  std::vector<VariantSummary> summaries;
};

/// Identity of a cell: train config, fold membership and the manifest's
/// taxonomies and frame list.
std::string cell_fingerprint(const TrainConfig& config, const Fold& fold, int fold_id, const DatasetManifest& manifest);

std::filesystem::path cell_dir(const std::filesystem::path& grid_dir, Variant variant, int fold_id);

/// Trains and evaluates one cell into `dir` (config.json, curve.jsonl,
/// best.ckpt, report.json). A report with a matching fingerprint is reused.
EvalReport run_cell(const DatasetManifest& manifest, const SplitPlan& plan, int fold_id, const TrainConfig& config,
                    const std::filesystem::path& dir, const GridOptions& options = {});

/// Every (config, fold) pair under grid_dir/<variant>/fold_<k>/. A failing
/// cell writes error.json and the grid carries on. summary.json and
/// table.txt are written at the end.
GridResult cross_validate(const DatasetManifest& manifest, const SplitPlan& plan, std::span<const TrainConfig> grid,
                          const std::filesystem::path& grid_dir, const GridOptions& options = {});

/// Reads every report.json below a grid directory.
std::vector<EvalReport> collect_reports(const std::filesystem::path& grid_dir);

void write_summary(const std::filesystem::path& grid_dir, std::span<const EvalReport> reports);

}  // namespace phaseseg::trainer

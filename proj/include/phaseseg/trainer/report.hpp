#pragma once

#include "phaseseg/maskops/metrics.hpp"
#include "phaseseg/trainer/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace phaseseg::trainer {

/// Test-set result of one (variant, fold) cell.
struct EvalReport {
  Variant variant = Variant::v0;
  int fold_id = 0;
  ClassMetrics metrics;
  std::string config_fingerprint;
  std::uint64_t seed = 0;
  int best_epoch = 0;
  double val_mean_dsc = 0.0;
  std::string stage;
  std::size_t test_frames = 0;
  std::string note;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

nlohmann::json eval_report_to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;

  friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

/// Population standard deviation (divide by n).
MeanStd mean_std(std::span<const double> values);

/// Across-fold statistics of one variant, computed over the fold means.
struct VariantSummary {
  Variant variant = Variant::v0;
  int folds = 0;
  MeanStd iou;
  MeanStd dsc;
  std::map<ClassId, MeanStd> class_dsc;
  Aggregation aggregation = Aggregation::per_frame;
};

inline constexpr const char* kStdFormula = "population: sqrt(sum((x - mean)^2) / n) over fold means";

/// One summary per variant present, in variant order.
std::vector<VariantSummary> summarize(std::span<const EvalReport> reports);
nlohmann::json variant_summary_to_json(const VariantSummary& s);

struct TableRow {
  Variant variant = Variant::v0;
  std::string conditioning;
  std::string phase_source;
  std::string pseudo;
  int folds = 0;
  MeanStd iou;
  MeanStd dsc;
};

std::string conditioning_label(Variant v);
std::string phase_source_label(Variant v);
std::string pseudo_label(Variant v);

/// Markdown-style table with one row per variant. Numbers are printed in
/// shortest round-trip form so parse_table recovers them exactly.
std::string render_table(std::span<const VariantSummary> summaries);
std::vector<TableRow> parse_table(std::string_view text);

}  // namespace phaseseg::trainer

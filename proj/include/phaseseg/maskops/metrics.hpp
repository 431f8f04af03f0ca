#pragma once

#include "phaseseg/core/raster.hpp"
#include "phaseseg/core/taxonomy.hpp"
#include "phaseseg/maskops/binary_mask.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace phaseseg {

/// tp/fp/fn/tn regions of a prediction against ground truth. The four masks
/// are pairwise disjoint and cover the frame.
struct RegionPartition {
  BinaryMask tp;
  BinaryMask fp;
  BinaryMask fn;
  BinaryMask tn;
};

RegionPartition partition_regions(const BinaryMask& pred, const BinaryMask& gt);

/// |pred & gt| / |pred | gt|; 1.0 when both masks are empty.
double iou(const BinaryMask& pred, const BinaryMask& gt);
/// 2|pred & gt| / (|pred| + |gt|); 1.0 when both masks are empty.
double dsc(const BinaryMask& pred, const BinaryMask& gt);

/// How per-class values are aggregated over frames.
///  per_frame: metric per frame where the class occurs in gt or pred, then
///             averaged over those frames (default).
///  pooled:    intersection/union pixel counts summed across frames first.
enum class Aggregation { per_frame, pooled };

std::string_view to_string(Aggregation a) noexcept;
Aggregation aggregation_from_string(std::string_view s);

struct ClassScore {
  double iou = 1.0;
  double dsc = 1.0;
  std::size_t support_frames = 0;

  friend bool operator==(const ClassScore&, const ClassScore&) = default;
};

/// Per-class scores for tool classes 1..C. Means are unweighted over classes
/// with support_frames > 0; background never enters the means.
struct ClassMetrics {
  std::map<ClassId, ClassScore> per_class;
  double mean_iou = 1.0;
  double mean_dsc = 1.0;
  Aggregation aggregation = Aggregation::per_frame;

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

nlohmann::json class_metrics_to_json(const ClassMetrics& m);
ClassMetrics class_metrics_from_json(const nlohmann::json& j);

/// Streaming form of evaluate_label_maps so validation loops need not keep
/// every prediction in memory.
class MetricAccumulator {
 public:
  MetricAccumulator(int num_tools, Aggregation aggregation = Aggregation::per_frame);

  void add(const LabelMap& pred, const LabelMap& gt);
  std::size_t frames() const noexcept { return frames_; }
  ClassMetrics finalize() const;

 private:
  struct Sums {
    double iou_sum = 0.0;
    double dsc_sum = 0.0;
    std::size_t support = 0;
    std::size_t inter = 0;
    std::size_t pred = 0;
    std::size_t gt = 0;
  };
  int num_tools_;
  Aggregation aggregation_;
  std::size_t frames_ = 0;
  std::vector<Sums> sums_;
};

ClassMetrics evaluate_label_maps(std::span<const LabelMap> preds, std::span<const LabelMap> gts,
                                 const ToolTaxonomy& taxonomy,
                                 Aggregation aggregation = Aggregation::per_frame);

}  // namespace phaseseg

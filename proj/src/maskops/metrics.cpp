#include "phaseseg/maskops/metrics.hpp"

#include "phaseseg/error.hpp"

#include <string>

namespace phaseseg {

using nlohmann::json;

namespace {

struct Counts {
  std::size_t inter = 0;
  std::size_t pred = 0;
  std::size_t gt = 0;
};

Counts count_overlap(const BinaryMask& pred, const BinaryMask& gt) {
  Counts c;
  const auto& p = pred.bits();
  const auto& g = gt.bits();
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.pred += p[i];
    c.gt += g[i];
    c.inter += p[i] & g[i];
  }
  return c;
}

double iou_of(std::size_t inter, std::size_t pred, std::size_t gt) {
  const std::size_t uni = pred + gt - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double dsc_of(std::size_t inter, std::size_t pred, std::size_t gt) {
  const std::size_t denom = pred + gt;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(denom);
}

}  // namespace

RegionPartition partition_regions(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "partition_regions");
  RegionPartition r{BinaryMask(gt.height(), gt.width()), BinaryMask(gt.height(), gt.width()),
                    BinaryMask(gt.height(), gt.width()), BinaryMask(gt.height(), gt.width())};
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool p = pred[i];
    const bool g = gt[i];
    if (p && g) r.tp.set_flat(i, true);
    else if (p) r.fp.set_flat(i, true);
    else if (g) r.fn.set_flat(i, true);
    else r.tn.set_flat(i, true);
  }
  return r;
}

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "iou");
  const Counts c = count_overlap(pred, gt);
  return iou_of(c.inter, c.pred, c.gt);
}

double dsc(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "dsc");
  const Counts c = count_overlap(pred, gt);
  return dsc_of(c.inter, c.pred, c.gt);
}

std::string_view to_string(Aggregation a) noexcept {
  return a == Aggregation::pooled ? "pooled" : "per_frame";
}

Aggregation aggregation_from_string(std::string_view s) {
  if (s == "per_frame") return Aggregation::per_frame;
  if (s == "pooled") return Aggregation::pooled;
  fail(ErrorKind::parse, "unknown aggregation protocol '" + std::string(s) + "'");
}

MetricAccumulator::MetricAccumulator(int num_tools, Aggregation aggregation)
    : num_tools_(num_tools), aggregation_(aggregation), sums_(static_cast<std::size_t>(num_tools) + 1) {}

void MetricAccumulator::add(const LabelMap& pred, const LabelMap& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    fail(ErrorKind::shape_mismatch, "prediction " + std::to_string(pred.width()) + "x" +
                                        std::to_string(pred.height()) + " vs ground truth " +
                                        std::to_string(gt.width()) + "x" +
                                        std::to_string(gt.height()));
  }
  const std::size_t n = static_cast<std::size_t>(num_tools_) + 1;
  std::vector<Counts> counts(n);
  const auto p = pred.data();
  const auto g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::size_t pc = p[i];
    const std::size_t gc = g[i];
    if (pc < n) ++counts[pc].pred;
    if (gc < n) ++counts[gc].gt;
    if (pc == gc && pc < n) ++counts[pc].inter;
  }
  for (std::size_t c = 1; c < n; ++c) {
    const Counts& k = counts[c];
    if (k.pred == 0 && k.gt == 0) continue;
    Sums& s = sums_[c];
    ++s.support;
    s.iou_sum += iou_of(k.inter, k.pred, k.gt);
    s.dsc_sum += dsc_of(k.inter, k.pred, k.gt);
    s.inter += k.inter;
    s.pred += k.pred;
    s.gt += k.gt;
  }
  ++frames_;
}

ClassMetrics MetricAccumulator::finalize() const {
  ClassMetrics m;
  m.aggregation = aggregation_;
  double iou_total = 0.0;
  double dsc_total = 0.0;
  int supported = 0;
  for (int c = 1; c <= num_tools_; ++c) {
    const Sums& s = sums_[static_cast<std::size_t>(c)];
    ClassScore score;
    score.support_frames = s.support;
    if (s.support > 0) {
      if (aggregation_ == Aggregation::per_frame) {
        score.iou = s.iou_sum / static_cast<double>(s.support);
        score.dsc = s.dsc_sum / static_cast<double>(s.support);
      } else {
        score.iou = iou_of(s.inter, s.pred, s.gt);
        score.dsc = dsc_of(s.inter, s.pred, s.gt);
      }
      iou_total += score.iou;
      dsc_total += score.dsc;
      ++supported;
    }
    m.per_class[c] = score;
  }
  if (supported > 0) {
    m.mean_iou = iou_total / supported;
    m.mean_dsc = dsc_total / supported;
  }
  return m;
}

ClassMetrics evaluate_label_maps(std::span<const LabelMap> preds, std::span<const LabelMap> gts,
                                 const ToolTaxonomy& taxonomy, Aggregation aggregation) {
  if (preds.empty() || gts.empty()) fail(ErrorKind::invalid_argument, "evaluate_label_maps: empty input");
  if (preds.size() != gts.size()) {
    fail(ErrorKind::shape_mismatch, "evaluate_label_maps: " + std::to_string(preds.size()) +
                                        " predictions vs " + std::to_string(gts.size()) +
                                        " ground-truth maps");
  }
  MetricAccumulator acc(taxonomy.num_tools(), aggregation);
  for (std::size_t i = 0; i < preds.size(); ++i) acc.add(preds[i], gts[i]);
  return acc.finalize();
}

json class_metrics_to_json(const ClassMetrics& m) {
  json per = json::object();
  for (const auto& [c, s] : m.per_class) {
    per[std::to_string(c)] = {{"iou", s.iou}, {"dsc", s.dsc}, {"support_frames", s.support_frames}};
  }
  return {{"per_class", per},
          {"mean_iou", m.mean_iou},
          {"mean_dsc", m.mean_dsc},
          {"aggregation_protocol", std::string(to_string(m.aggregation))}};
}

ClassMetrics class_metrics_from_json(const json& j) {
  ClassMetrics m;
  for (const auto& [key, v] : j.at("per_class").items()) {
    m.per_class[std::stoi(key)] = {v.at("iou").get<double>(), v.at("dsc").get<double>(),
                                   v.at("support_frames").get<std::size_t>()};
  }
  m.mean_iou = j.at("mean_iou").get<double>();
  m.mean_dsc = j.at("mean_dsc").get<double>();
  m.aggregation = aggregation_from_string(j.at("aggregation_protocol").get<std::string>());
  return m;
}

}  // namespace phaseseg

#include "phaseseg/trainer/report.hpp"

#include "phaseseg/error.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace phaseseg::trainer {

using json = nlohmann::json;

json eval_report_to_json(const EvalReport& r) {
  return {{"variant", std::string(to_string(r.variant))},
          {"fold_id", r.fold_id},
          {"metrics", class_metrics_to_json(r.metrics)},
          {"mean_iou", r.metrics.mean_iou},
          {"mean_dsc", r.metrics.mean_dsc},
          {"aggregation_protocol", std::string(to_string(r.metrics.aggregation))},
          {"config_fingerprint", r.config_fingerprint},
          {"seed", r.seed},
          {"best_epoch", r.best_epoch},
          {"val_mean_dsc", r.val_mean_dsc},
          {"stage", r.stage},
          {"test_frames", r.test_frames},
          {"note", r.note}};
}

EvalReport eval_report_from_json(const json& j) {
  try {
    EvalReport r;
    r.variant = variant_from_string(j.at("variant").get<std::string>());
    r.fold_id = j.at("fold_id").get<int>();
    r.metrics = class_metrics_from_json(j.at("metrics"));
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.best_epoch = j.value("best_epoch", 0);
    r.val_mean_dsc = j.value("val_mean_dsc", 0.0);
    r.stage = j.value("stage", "");
    r.test_frames = j.value("test_frames", std::size_t{0});
    r.note = j.value("note", "");
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("eval report: ") + e.what());
  }
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

std::vector<VariantSummary> summarize(std::span<const EvalReport> reports) {
  std::vector<VariantSummary> out;
  for (const auto& spec : variant_table()) {
    std::vector<double> ious;
    std::vector<double> dscs;
    std::map<ClassId, std::vector<double>> per_class;
    Aggregation agg = Aggregation::per_frame;
    for (const auto& r : reports) {
      if (r.variant != spec.variant) continue;
      ious.push_back(r.metrics.mean_iou);
      dscs.push_back(r.metrics.mean_dsc);
      agg = r.metrics.aggregation;
      for (const auto& [c, s] : r.metrics.per_class)
        if (s.support_frames > 0) per_class[c].push_back(s.dsc);
    }
    if (ious.empty()) continue;
    VariantSummary s;
    s.variant = spec.variant;
    s.folds = static_cast<int>(ious.size());
    s.iou = mean_std(ious);
    s.dsc = mean_std(dscs);
    for (const auto& [c, v] : per_class) s.class_dsc[c] = mean_std(v);
    s.aggregation = agg;
    out.push_back(std::move(s));
  }
  return out;
}

json variant_summary_to_json(const VariantSummary& s) {
  json classes = json::object();
  for (const auto& [c, m] : s.class_dsc) classes[std::to_string(c)] = {{"mean", m.mean}, {"std", m.std}};
  return {{"variant", std::string(to_string(s.variant))},
          {"folds", s.folds},
          {"mean_iou", {{"mean", s.iou.mean}, {"std", s.iou.std}}},
          {"mean_dsc", {{"mean", s.dsc.mean}, {"std", s.dsc.std}}},
          {"class_dsc", classes},
          {"aggregation_protocol", std::string(to_string(s.aggregation))},
          {"std_formula", kStdFormula}};
}

std::string conditioning_label(Variant v) {
  switch (variant_spec(v).pcd_mode) {
    case segnet::PcdMode::none: return "None";
    case segnet::PcdMode::basic: return "Basic";
    case segnet::PcdMode::gated: return "Gated";
  }
  return "None";
}

std::string phase_source_label(Variant v) {
  switch (variant_spec(v).phase_source) {
    case PhaseSource::none: return "None";
    case PhaseSource::predicted_file: return "Predicted";
    case PhaseSource::ground_truth: return "Ground Truth";
  }
  return "None";
}

std::string pseudo_label(Variant v) { return variant_spec(v).use_pseudo ? "Yes" : "No"; }

namespace {

constexpr std::string_view kPlusMinus = " ± ";

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorKind::parse, "bad number '" + std::string(s) + "' in table");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

MeanStd parse_mean_std(std::string_view cell) {
  const auto pos = cell.find(kPlusMinus);
  if (pos == std::string_view::npos) fail(ErrorKind::parse, "expected 'mean ± std' in '" + std::string(cell) + "'");
  return {parse_double(cell.substr(0, pos)), parse_double(cell.substr(pos + kPlusMinus.size()))};
}

}  // namespace

std::string render_table(std::span<const VariantSummary> summaries) {
  std::ostringstream out;
  out << "| Variant | Phase Conditioning | Phase Source | Pseudo Data | Folds | IoU (m ± std) | DSC (m ± std) |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const auto& s : summaries) {
    out << "| " << to_string(s.variant) << " | " << conditioning_label(s.variant) << " | "
        << phase_source_label(s.variant) << " | " << pseudo_label(s.variant) << " | " << s.folds << " | "
        << shortest(s.iou.mean) << kPlusMinus << shortest(s.iou.std) << " | " << shortest(s.dsc.mean) << kPlusMinus
        << shortest(s.dsc.std) << " |\n";
  }
  if (!summaries.empty()) {
    out << "\nstd: " << kStdFormula << "; aggregation: " << to_string(summaries.front().aggregation) << '\n';
  }
  return out.str();
}

std::vector<TableRow> parse_table(std::string_view text) {
  std::vector<TableRow> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.size() < 2 || line.front() != '|' || line.substr(0, 3) != "| v") continue;
    std::vector<std::string_view> cells;
    std::size_t p = 1;
    while (p < line.size()) {
      const std::size_t q = line.find('|', p);
      if (q == std::string_view::npos) break;
      cells.push_back(trim(line.substr(p, q - p)));
      p = q + 1;
    }
    if (cells.size() != 7) fail(ErrorKind::parse, "table row has " + std::to_string(cells.size()) + " cells");
    TableRow r;
    r.variant = variant_from_string(cells[0]);
    r.conditioning = cells[1];
    r.phase_source = cells[2];
    r.pseudo = cells[3];
    r.folds = static_cast<int>(parse_double(cells[4]));
    r.iou = parse_mean_std(cells[5]);
    r.dsc = parse_mean_std(cells[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace phaseseg::trainer

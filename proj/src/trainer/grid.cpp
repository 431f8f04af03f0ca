#include "phaseseg/trainer/grid.hpp"

#include "phaseseg/error.hpp"
#include "phaseseg/rng.hpp"

#include <algorithm>
#include <fstream>

namespace phaseseg::trainer {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << text;
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

}  // namespace

std::string cell_fingerprint(const TrainConfig& config, const Fold& fold, int fold_id, const DatasetManifest& manifest) {
  json frames = json::array();
  for (const auto& f : manifest.frames) {
    if (!f.labeled()) continue;
    frames.push_back({f.video_id, f.frame_index, std::string(to_string(f.provenance))});
  }
  const json j{{"config", train_config_to_json(config)},
               {"fold_id", fold_id},
               {"train", fold.train_videos},
               {"val", fold.val_videos},
               {"test", fold.test_videos},
               {"tools", segnet::fingerprint_hex(manifest.tools.fingerprint())},
               {"phases", segnet::fingerprint_hex(manifest.phases.fingerprint())},
               {"frames", segnet::fingerprint_hex(fnv1a64(frames.dump()))}};
  return segnet::fingerprint_hex(fnv1a64(j.dump()));
}

fs::path cell_dir(const fs::path& grid_dir, Variant variant, int fold_id) {
  return grid_dir / std::string(to_string(variant)) / ("fold_" + std::to_string(fold_id));
}

EvalReport run_cell(const DatasetManifest& manifest, const SplitPlan& plan, int fold_id, const TrainConfig& config,
                    const fs::path& dir, const GridOptions& options) {
  if (fold_id < 0 || fold_id >= static_cast<int>(plan.folds.size())) {
    fail(ErrorKind::invalid_argument, "fold " + std::to_string(fold_id) + " is not in the split plan");
  }
  const Fold& fold = plan.folds[static_cast<std::size_t>(fold_id)];
  const std::string fp = cell_fingerprint(config, fold, fold_id, manifest);
  const fs::path report_path = dir / "report.json";
  if (options.resume && fs::exists(report_path)) {
    EvalReport r = eval_report_from_json(read_json(report_path));
    if (r.config_fingerprint == fp) {
      if (options.log) *options.log << to_string(config.variant) << " fold " << fold_id << ": reusing report\n";
      return r;
    }
  }
  fs::create_directories(dir);
  fs::remove(dir / "error.json");
  fs::remove(report_path);
  write_text(dir / "config.json", json{{"train_config", train_config_to_json(config)},
                                       {"fold_id", fold_id},
                                       {"fold", {{"train", fold.train_videos},
                                                 {"val", fold.val_videos},
                                                 {"test", fold.test_videos}}},
                                       {"cell_fingerprint", fp},
                                       {"manifest_root", manifest.root.string()}}
                                      .dump(2) +
                                      "\n");

  TrainOptions topt;
  topt.resume = options.resume;
  topt.log = options.log;
  const CheckpointMeta best = train_variant(manifest, fold, config, dir, topt);
  if (!best.completed) fail(ErrorKind::validation, "training was interrupted");

  EvalReport r;
  r.variant = config.variant;
  r.fold_id = fold_id;
  r.metrics = evaluate_checkpoint(dir / "best.ckpt", manifest, fold.test_videos, config);
  r.config_fingerprint = fp;
  r.seed = config.seed;
  r.best_epoch = best.epoch;
  r.val_mean_dsc = best.val_mean_dsc;
  r.stage = std::string(to_string(best.stage));
  for (const auto& f : manifest.frames)
    if (f.provenance == Provenance::human &&
        std::find(fold.test_videos.begin(), fold.test_videos.end(), f.video_id) != fold.test_videos.end())
      ++r.test_frames;
  if (best.stage == Stage::finetune) {
    r.note = "two-stage: stage 2 starts from the stage-1 best weights with a fresh optimizer and early-stopping state";
  }
  write_text(report_path, eval_report_to_json(r).dump(2) + "\n");
  return r;
}

GridResult cross_validate(const DatasetManifest& manifest, const SplitPlan& plan, std::span<const TrainConfig> grid,
                          const fs::path& grid_dir, const GridOptions& options) {
  std::vector<int> folds = options.folds;
  if (folds.empty())
    for (int k = 0; k < static_cast<int>(plan.folds.size()); ++k) folds.push_back(k);
  validate_split(plan, manifest.video_ids());

  GridResult result;
  for (const auto& config : grid) {
    for (int k : folds) {
      const fs::path dir = cell_dir(grid_dir, config.variant, k);
      try {
        result.reports.push_back(run_cell(manifest, plan, k, config, dir, options));
      } catch (const std::exception& e) {
        CellFailure f{config.variant, k, "error", e.what()};
        if (const auto* pe = dynamic_cast<const Error*>(&e)) f.kind = std::string(to_string(pe->kind()));
        fs::create_directories(dir);
        write_text(dir / "error.json", json{{"kind", f.kind}, {"message", f.message}}.dump(2) + "\n");
        if (options.log) *options.log << to_string(config.variant) << " fold " << k << " failed: " << e.what() << '\n';
        result.failures.push_back(std::move(f));
      }
    }
  }
  write_summary(grid_dir, result.reports);
  result.summaries = summarize(result.reports);
  return result;
}

std::vector<EvalReport> collect_reports(const fs::path& grid_dir) {
  std::vector<fs::path> paths;
  if (fs::exists(grid_dir))
    for (const auto& e : fs::recursive_directory_iterator(grid_dir))
      if (e.is_regular_file() && e.path().filename() == "report.json") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::vector<EvalReport> out;
  for (const auto& p : paths) out.push_back(eval_report_from_json(read_json(p)));
  std::sort(out.begin(), out.end(), [](const EvalReport& a, const EvalReport& b) {
    return std::pair(a.variant, a.fold_id) < std::pair(b.variant, b.fold_id);
  });
  return out;
}

void write_summary(const fs::path& grid_dir, std::span<const EvalReport> reports) {
  fs::create_directories(grid_dir);
  const auto summaries = summarize(reports);
  json j{{"variants", json::array()}, {"reports", json::array()}, {"std_formula", kStdFormula}};
  for (const auto& s : summaries) j["variants"].push_back(variant_summary_to_json(s));
  for (const auto& r : reports) j["reports"].push_back(eval_report_to_json(r));
  write_text(grid_dir / "summary.json", j.dump(2) + "\n");
  write_text(grid_dir / "table.txt", render_table(summaries));
}

}  // namespace phaseseg::trainer

#include "phaseseg/pseudolabel/engine.hpp"

#include "phaseseg/core/image_io.hpp"
#include "phaseseg/error.hpp"
#include "phaseseg/maskops/metrics.hpp"
#include "phaseseg/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace phaseseg::pseudo {

namespace fs = std::filesystem;

std::string_view to_string(Direction d) noexcept { return d == Direction::forward ? "forward" : "backward"; }

namespace {

template <typename F>
auto with_context(const FrameRef& frame, F&& call) {
  try {
    return call();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::segmenter && std::string_view(e.what()).starts_with("segmenter failed")) throw;
    fail(ErrorKind::segmenter, "segmenter failed at " + to_string(frame) + ": " + e.what());
  } catch (const std::exception& e) {
    fail(ErrorKind::segmenter, "segmenter failed at " + to_string(frame) + ": " + e.what());
  }
}

std::string frame_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", frame);
  return buf;
}

std::string frame_key(const FrameRef& f) { return f.video_id + "." + std::to_string(f.frame_index); }

}  // namespace

PromptSet refine_prompts(PromptableSegmenter& segmenter, const FrameRef& frame, const BinaryMask& gt,
                         const PromptSet& initial, int max_rounds, double target_iou, std::uint64_t seed) {
  if (max_rounds < 0) fail(ErrorKind::invalid_argument, "max_rounds must be >= 0");
  PromptSet best = initial;
  best.frame = frame;
  BinaryMask best_mask = with_context(frame, [&] { return segmenter.segment_frame(frame, best.points); });
  require_same_shape(best_mask, gt, "refine_prompts");
  best.score = iou(best_mask, gt);
  for (int round = 1; round <= max_rounds && best.score < target_iou; ++round) {
    const RegionPartition part = partition_regions(best_mask, gt);
    const std::string tag = "refine." + std::to_string(round) + ".";
    std::vector<PointPrompt> points;
    auto add = [&](const BinaryMask& region, PointLabel label, const char* name) {
      auto pts = sample_points(region, 2, label, derive_seed(seed, tag + name));
      points.insert(points.end(), pts.begin(), pts.end());
    };
    add(part.tp, PointLabel::positive, "tp");
    add(part.fn, PointLabel::positive, "fn");
    add(part.fp, PointLabel::negative, "fp");
    add(part.tn, PointLabel::negative, "tn");
    BinaryMask mask = with_context(frame, [&] { return segmenter.segment_frame(frame, points); });
    require_same_shape(mask, gt, "refine_prompts");
    const double score = iou(mask, gt);
    if (score > best.score) {
      best.points = std::move(points);
      best.score = score;
      best_mask = std::move(mask);
    }
  }
  return best;
}

std::vector<PseudoLabelRecord> propagate_labels(PromptableSegmenter& segmenter, const DatasetManifest& manifest,
                                                const FrameRef& anchor, const std::vector<PromptSet>& best,
                                                const PseudoOptions& options, std::vector<Exclusion>* exclusions) {
  const PhaseTrack* track = manifest.track(anchor.video_id);
  if (!track) fail(ErrorKind::not_found, "unknown video '" + anchor.video_id + "'");
  if (best.empty()) fail(ErrorKind::invalid_argument, "anchor " + to_string(anchor) + " has no prompt sets");
  auto exclude = [&](int target, ClassId c, const char* reason) {
    if (exclusions) exclusions->push_back({anchor, target, c, reason});
  };

  const std::vector<int> offsets =
      propagation_offsets(anchor.frame_index, track->num_frames, options.stride, options.horizon);
  std::vector<int> clipped;
  for (int k = 1; k <= options.horizon / options.stride; ++k)
    for (int t : {anchor.frame_index - k * options.stride, anchor.frame_index + k * options.stride})
      if (t < 0 || t >= track->num_frames) clipped.push_back(t);

  std::vector<PseudoLabelRecord> records;
  for (const PromptSet& ps : best) {
    for (int t : clipped) exclude(t, ps.class_id, "clipped_at_video_boundary");
    if (ps.score < options.min_source_iou) {
      exclude(-1, ps.class_id, "below_min_source_iou");
      continue;
    }
    std::vector<int> targets;
    for (int t : offsets) {
      if (manifest.find_frame(anchor.video_id, t)) {
        targets.push_back(t);
      } else {
        std::cerr << "warning: no frame " << t << " in " << anchor.video_id << ", skipping propagation target\n";
        exclude(t, ps.class_id, "missing_frame");
      }
    }
    if (targets.empty()) continue;
    std::optional<BinaryMask> seed_mask;
    if (options.seed_from_mask)
      seed_mask = with_context(anchor, [&] { return segmenter.segment_frame(anchor, ps.points); });
    const auto masks = with_context(anchor, [&] {
      return segmenter.propagate(anchor, ps.points, seed_mask ? &*seed_mask : nullptr, targets);
    });
    if (masks.size() != targets.size()) {
      fail(ErrorKind::segmenter, "segmenter failed at " + to_string(anchor) + ": returned " +
                                     std::to_string(masks.size()) + " masks for " + std::to_string(targets.size()) +
                                     " targets");
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (!masks[i].any()) {
        exclude(targets[i], ps.class_id, "empty_mask");
        continue;
      }
      PseudoLabelRecord r;
      r.source = anchor;
      r.target_frame_index = targets[i];
      r.class_id = ps.class_id;
      r.mask = masks[i];
      r.prompt_score_at_source = ps.score;
      r.direction = targets[i] > anchor.frame_index ? Direction::forward : Direction::backward;
      records.push_back(std::move(r));
    }
  }
  return records;
}

LabelMap merge_tool_masks(const std::vector<const PseudoLabelRecord*>& records, int width, int height) {
  std::vector<std::pair<std::size_t, const PseudoLabelRecord*>> order;
  for (const auto* r : records) {
    if (r->mask.width() != width || r->mask.height() != height) {
      fail(ErrorKind::shape_mismatch, "pseudo mask for " + to_string({r->source.video_id, r->target_frame_index}) +
                                          " does not match the frame size");
    }
    order.emplace_back(r->mask.count(), r);
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second->class_id < b.second->class_id;
  });
  LabelMap out(width, height);
  auto px = out.data();
  for (const auto& [area, r] : order)
    for (std::size_t i = 0; i < r->mask.size(); ++i)
      if (r->mask[i] && px[i] == 0) px[i] = static_cast<std::uint8_t>(r->class_id);
  return out;
}

DatasetManifest assemble_pseudo_dataset(const DatasetManifest& manifest, const std::vector<PseudoLabelRecord>& records,
                                        const fs::path& label_dir, std::vector<Exclusion>* exclusions) {
  DatasetManifest out = manifest;
  std::map<std::pair<std::string, int>, std::size_t> index;
  for (std::size_t i = 0; i < out.frames.size(); ++i)
    index[{out.frames[i].video_id, out.frames[i].frame_index}] = i;

  std::map<std::pair<std::string, int>, std::vector<const PseudoLabelRecord*>> groups;
  for (const auto& r : records) {
    if (!manifest.track(r.source.video_id)) {
      fail(ErrorKind::validation, "pseudo record references unknown video '" + r.source.video_id + "'");
    }
    groups[{r.source.video_id, r.target_frame_index}].push_back(&r);
  }
  auto exclude = [&](const PseudoLabelRecord& r, const char* reason) {
    if (exclusions) exclusions->push_back({r.source, r.target_frame_index, r.class_id, reason});
  };

  for (const auto& [key, recs] : groups) {
    const auto it = index.find(key);
    if (it == index.end()) {
      std::cerr << "warning: no frame " << key.second << " in " << key.first << ", dropping pseudo label\n";
      for (const auto* r : recs) exclude(*r, "missing_frame");
      continue;
    }
    FrameRecord& frame = out.frames[it->second];
    if (frame.provenance == Provenance::human) {
      for (const auto* r : recs) exclude(*r, "human_frame");
      continue;
    }
    int best_source = recs.front()->source.frame_index;
    for (const auto* r : recs) {
      const int d = std::abs(r->target_frame_index - r->source.frame_index);
      const int bd = std::abs(key.second - best_source);
      if (d < bd || (d == bd && r->source.frame_index < best_source)) best_source = r->source.frame_index;
    }
    std::vector<const PseudoLabelRecord*> chosen;
    for (const auto* r : recs) {
      if (r->source.frame_index == best_source)
        chosen.push_back(r);
      else
        exclude(*r, "superseded_by_closer_anchor");
    }
    const LabelMap labels = merge_tool_masks(chosen, frame.width, frame.height);
    const fs::path path = fs::absolute(label_dir / frame.video_id / (frame_name(frame.frame_index) + ".png"));
    write_label_map(path, labels);
    frame.label_map_path = path;
    frame.provenance = Provenance::pseudo;
    if (const PhaseTrack* t = out.track(frame.video_id)) frame.phase_id = phase_of_frame(*t, frame.frame_index);
  }
  return out;
}

nlohmann::json record_to_json(const PseudoLabelRecord& r) {
  return {{"source_video", r.source.video_id},
          {"source_frame", r.source.frame_index},
          {"target_frame", r.target_frame_index},
          {"class_id", r.class_id},
          {"mask_path", r.mask_path.generic_string()},
          {"prompt_score_at_source", r.prompt_score_at_source},
          {"direction", std::string(to_string(r.direction))}};
}

nlohmann::json exclusion_to_json(const Exclusion& e) {
  nlohmann::json j{{"source_video", e.source.video_id},
                   {"source_frame", e.source.frame_index},
                   {"class_id", e.class_id},
                   {"reason", e.reason}};
  j["target_frame"] = e.target_frame_index >= 0 ? nlohmann::json(e.target_frame_index) : nlohmann::json(nullptr);
  return j;
}

PseudoRunResult run_pseudo_pipeline(const DatasetManifest& manifest, PromptableSegmenter& segmenter,
                                    const PseudoOptions& options, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  CachingSegmenter cache(segmenter);
  PseudoRunResult result;

  std::vector<const FrameRecord*> anchors;
  for (const auto& f : manifest.frames)
    if (f.provenance == Provenance::human) anchors.push_back(&f);
  std::sort(anchors.begin(), anchors.end(), [](const FrameRecord* a, const FrameRecord* b) {
    return std::tie(a->video_id, a->frame_index) < std::tie(b->video_id, b->frame_index);
  });

  for (const FrameRecord* a : anchors) {
    const FrameRef anchor{a->video_id, a->frame_index};
    const LabelMap labels = read_label_map(manifest.resolve(*a->label_map_path));
    std::set<ClassId> present;
    for (std::uint8_t v : labels.data())
      if (v != 0) present.insert(v);
    if (present.empty()) continue;
    std::vector<PromptSet> best;
    for (ClassId c : present) {
      const BinaryMask gt = BinaryMask::from_labels(labels, c);
      const std::string tag = frame_key(anchor) + "." + std::to_string(c);
      PromptSet init = sample_initial_prompts(gt, derive_seed(options.seed, "pseudo.prompts." + tag));
      init.frame = anchor;
      init.class_id = c;
      best.push_back(refine_prompts(cache, anchor, gt, init, options.max_rounds, options.target_iou,
                                    derive_seed(options.seed, "pseudo.refine." + tag)));
    }
    auto recs = propagate_labels(cache, manifest, anchor, best, options, &result.exclusions);
    result.prompt_sets.insert(result.prompt_sets.end(), best.begin(), best.end());
    for (auto& r : recs) result.records.push_back(std::move(r));
  }

  for (auto& r : result.records) {
    r.mask_path = fs::path("pseudo_masks") / r.source.video_id /
                  (frame_name(r.target_frame_index) + "_c" + std::to_string(r.class_id) + "_from_" +
                   frame_name(r.source.frame_index) + ".png");
    LabelMap m(r.mask.width(), r.mask.height());
    for (std::size_t i = 0; i < r.mask.size(); ++i) m.data()[i] = r.mask[i] ? 255 : 0;
    write_label_map(out_dir / r.mask_path, m);
  }

  result.manifest = assemble_pseudo_dataset(manifest, result.records, out_dir / "pseudo_labels", &result.exclusions);
  save_manifest(result.manifest, out_dir);
  result.manifest = load_manifest(out_dir);

  std::ofstream rec_out(out_dir / kRecordsFile);
  for (const auto& r : result.records) rec_out << record_to_json(r).dump() << '\n';
  std::ofstream exc_out(out_dir / kExclusionsFile);
  for (const auto& e : result.exclusions) exc_out << exclusion_to_json(e).dump() << '\n';
  std::ofstream prompt_out(out_dir / "pseudo_prompts.jsonl");
  for (const auto& p : result.prompt_sets) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& pt : p.points) pts.push_back({pt.x, pt.y, pt.label == PointLabel::positive ? 1 : 0});
    prompt_out << nlohmann::json{{"video", p.frame.video_id},
                                 {"frame", p.frame.frame_index},
                                 {"class_id", p.class_id},
                                 {"score", p.score},
                                 {"points", pts}}
                      .dump()
               << '\n';
  }
  if (!rec_out || !exc_out || !prompt_out) fail(ErrorKind::io, "failed writing pseudo-label ledgers in " + out_dir.string());
  return result;
}

}  // namespace phaseseg::pseudo

#include "oracles.hpp"

#include "phaseseg/core/image_io.hpp"
#include "phaseseg/error.hpp"
#include "phaseseg/maskops/morphology.hpp"
#include "phaseseg/pseudolabel/engine.hpp"
#include "phaseseg/pseudolabel/http_segmenter.hpp"
#include "phaseseg/pseudolabel/oracle.hpp"
#include "phaseseg/synth/world.hpp"

#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

using namespace phaseseg;
using namespace phaseseg::pseudo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("phaseseg_test_pseudo_" + name);
  fs::remove_all(p);
  return p;
}

synth::WorldConfig margin_world() {
  synth::WorldConfig c;
  c.videos = 2;
  c.frames = 600;
  c.tools = 3;
  c.phases = 3;
  c.seed = 21;
  c.working = {32, 32};
  c.downscale = 1;
  c.phase_length_jitter = 0.0;
  c.label_margin = 90;
  return c;
}

/// A frame and a class visible in it.
std::pair<FrameRef, ClassId> visible_tool(const synth::World& w) {
  for (const auto& v : w.video_ids())
    for (int f : w.emitted_frames(v)) {
      const auto lab = w.labels(v, f);
      for (auto px : lab.data())
        if (px) return {{v, f}, px};
    }
  FAIL("no visible tool");
  return {};
}

}  // namespace

TEST_CASE("point sampling stays inside the region without repeats") {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto region = oracle::random_mask(rng, 10, 10, 0.2);
    const auto pts = sample_points(region, 5, PointLabel::positive, 100 + t);
    CHECK(pts.size() == std::min<std::size_t>(5, region.count()));
    std::set<std::pair<int, int>> seen;
    for (const auto& p : pts) {
      CHECK(region.get(p.y, p.x));
      CHECK(seen.insert({p.x, p.y}).second);
      CHECK(p.label == PointLabel::positive);
    }
    CHECK(sample_points(region, 5, PointLabel::positive, 100 + t) == pts);
  }
}

TEST_CASE("initial prompts are two positives inside and two negatives outside") {
  BinaryMask gt(8, 8);
  for (int y = 2; y < 5; ++y)
    for (int x = 2; x < 6; ++x) gt.set(y, x);
  const auto ps = sample_initial_prompts(gt, 3);
  int pos = 0, neg = 0;
  for (const auto& p : ps.points) {
    if (p.label == PointLabel::positive) {
      ++pos;
      CHECK(gt.get(p.y, p.x));
    } else {
      ++neg;
      CHECK(!gt.get(p.y, p.x));
    }
  }
  CHECK(pos == 2);
  CHECK(neg == 2);
  CHECK_THROWS_AS(sample_initial_prompts(BinaryMask(4, 4), 1), Error);
}

TEST_CASE("propagation offsets: interior, boundary and invalid input") {
  CHECK(propagation_offsets(300, 1000) == std::vector<int>{210, 240, 270, 330, 360, 390});
  CHECK(propagation_offsets(30, 1000) == std::vector<int>{0, 60, 90, 120});
  CHECK(propagation_offsets(950, 1000) == std::vector<int>{860, 890, 920, 980});
  CHECK(propagation_offsets(0, 1).empty());
  CHECK(propagation_offsets(100, 1000, 10, 20) == std::vector<int>{80, 90, 110, 120});
  CHECK_THROWS_AS(propagation_offsets(1000, 1000), Error);
  CHECK_THROWS_AS(propagation_offsets(5, 10, 30, 100), Error);
  CHECK_THROWS_AS(propagation_offsets(5, 10, 0, 90), Error);
}

TEST_CASE("oracle fidelities") {
  const synth::World w(margin_world());
  const auto [frame, cls] = visible_tool(w);
  const auto gt = BinaryMask::from_labels(w.labels(frame.video_id, frame.frame_index), cls);
  const auto prompts = sample_initial_prompts(gt, 9).points;

  OracleSegmenter perfect(w, Fidelity::perfect);
  CHECK(perfect.segment_frame(frame, prompts) == gt);
  OracleSegmenter dilated(w, Fidelity::dilated, 0, 2);
  CHECK(dilated.segment_frame(frame, prompts) == dilate(gt, 2));
  OracleSegmenter jittered(w, Fidelity::jittered, 5);
  const auto j = jittered.segment_frame(frame, prompts);
  const auto band_out = dilate(gt, 1), band_in = erode(gt, 1);
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (band_out[i] == band_in[i]) CHECK(j[i] == gt[i]);
  CHECK(jittered.segment_frame(frame, prompts) == j);

  std::vector<PointPrompt> negatives;
  for (const auto& p : prompts)
    if (p.label == PointLabel::negative) negatives.push_back(p);
  CHECK(!perfect.segment_frame(frame, negatives).any());

  const auto targets = std::vector<int>{frame.frame_index};
  const auto prop = perfect.propagate(frame, prompts, nullptr, targets);
  REQUIRE(prop.size() == 1);
  CHECK(prop[0] == gt);
  CHECK(fidelity_from_string("dilated") == Fidelity::dilated);
  CHECK_THROWS_AS(fidelity_from_string("blurry"), Error);
}

TEST_CASE("refinement never lowers the best score") {
  synth::WorldConfig c = margin_world();
  const synth::World w(c);
  const auto [frame, cls] = visible_tool(w);
  const auto gt = BinaryMask::from_labels(w.labels(frame.video_id, frame.frame_index), cls);
  OracleSegmenter seg(w, Fidelity::dilated, 0, 2);
  for (std::uint64_t s = 0; s < 100; ++s) {
    PromptSet init = sample_initial_prompts(gt, s);
    init.frame = frame;
    init.class_id = cls;
    init.score = oracle::iou(seg.segment_frame(frame, init.points), gt);
    const PromptSet best = refine_prompts(seg, frame, gt, init, 3, 0.95, s + 1000);
    CHECK(best.score >= init.score);
    CHECK(best.score == doctest::Approx(oracle::iou(seg.segment_frame(frame, best.points), gt)));
  }
}

TEST_CASE("caching segmenter reuses identical calls") {
  const synth::World w(margin_world());
  const auto [frame, cls] = visible_tool(w);
  const auto gt = BinaryMask::from_labels(w.labels(frame.video_id, frame.frame_index), cls);
  OracleSegmenter inner(w, Fidelity::perfect);
  CachingSegmenter cache(inner);
  const auto pts = sample_initial_prompts(gt, 2).points;
  CHECK(cache.segment_frame(frame, pts) == cache.segment_frame(frame, pts));
  CHECK(cache.hits() == 1);
  CHECK(cache.misses() == 1);
}

TEST_CASE("RLE round trip and malformed input") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto m = oracle::random_mask(rng, 1 + static_cast<int>(rng.index(9)), 1 + static_cast<int>(rng.index(9)),
                                       rng.uniform());
    CHECK(mask_from_rle(mask_to_rle(m)) == m);
  }
  BinaryMask m(1, 4);
  m.set(0, 0);
  CHECK(mask_to_rle(m)["counts"] == nlohmann::json({0, 1, 3}));
  CHECK_THROWS_AS(mask_from_rle({{"height", 2}, {"width", 2}, {"counts", {1, 1}}}), Error);
  CHECK_THROWS_AS(mask_from_rle({{"height", 2}, {"width", 2}, {"counts", {5}}}), Error);
  CHECK_THROWS_AS(mask_from_rle({{"width", 2}}), Error);
}

TEST_CASE("merge gives overlaps to the smaller mask") {
  PseudoLabelRecord big, small;
  big.class_id = 1;
  big.mask = BinaryMask(4, 4, true);
  small.class_id = 2;
  small.mask = BinaryMask(4, 4);
  small.mask.set(1, 1);
  const auto merged = merge_tool_masks({&big, &small}, 4, 4);
  CHECK(merged(1, 1) == 2);
  CHECK(merged(0, 0) == 1);
}

TEST_CASE("http segmenter round trip through an in-process server") {
  const auto dir = scratch("http");
  synth::WorldConfig c = margin_world();
  c.videos = 1;
  const DatasetManifest m = synth::generate_dataset(c, dir);
  const synth::World w = synth::load_world(dir);
  OracleSegmenter oracle_seg(w, Fidelity::dilated, 0, 1);
  SegmenterServer server(oracle_seg);
  HttpSegmenter client(server.url(), m, 10);

  const auto [frame, cls] = visible_tool(w);
  const auto gt = BinaryMask::from_labels(w.labels(frame.video_id, frame.frame_index), cls);
  const auto pts = sample_initial_prompts(gt, 4).points;
  CHECK(client.segment_frame(frame, pts) == oracle_seg.segment_frame(frame, pts));
  const std::vector<int> targets{frame.frame_index, frame.frame_index + 30};
  CHECK(client.propagate(frame, pts, &gt, targets) == oracle_seg.propagate(frame, pts, &gt, targets));

  const FrameRef bad{frame.video_id, 100000};
  try {
    client.segment_frame(bad, pts);
    FAIL("expected a segmenter error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::segmenter);
  }
  server.stop();
  try {
    client.segment_frame(frame, pts);
    FAIL("expected a segmenter error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::segmenter);
  }
}

TEST_CASE("perfect-oracle pipeline: record cardinality and exact labels") {
  const auto dir = scratch("pipeline");
  const DatasetManifest m = synth::generate_dataset(margin_world(), dir);
  const synth::World w = synth::load_world(dir);
  OracleSegmenter seg(w, Fidelity::perfect);
  PseudoOptions opt;
  opt.seed = 5;
  const auto run = run_pseudo_pipeline(m, seg, opt, dir / "pseudo");

  std::size_t expected = 0;
  std::size_t anchors = 0;
  for (const auto& f : m.frames) {
    if (f.provenance != Provenance::human) continue;
    ++anchors;
    const auto labels = w.labels(f.video_id, f.frame_index);
    const std::set<int> present(labels.data().begin(), labels.data().end());
    const int len = w.track(f.video_id).num_frames;
    for (int c : present) {
      if (c == 0) continue;
      for (int t : propagation_offsets(f.frame_index, len)) {
        if (!m.find_frame(f.video_id, t)) continue;
        if (BinaryMask::from_labels(w.labels(f.video_id, t), c).any()) ++expected;
      }
    }
  }
  REQUIRE(anchors > 0);
  CHECK(run.records.size() == expected);
  for (const auto& p : run.prompt_sets) CHECK(p.score == 1.0);

  const DatasetManifest out = load_manifest(dir / "pseudo");
  std::size_t pseudo_frames = 0;
  for (const auto& f : out.frames) {
    if (f.provenance == Provenance::human) {
      CHECK(m.find_frame(f.video_id, f.frame_index)->label_map_path.has_value());
    }
    if (f.provenance != Provenance::pseudo) continue;
    ++pseudo_frames;
    CHECK(!w.human_labeled(f.video_id, f.frame_index));
    const LabelMap pl = read_label_map(out.resolve(*f.label_map_path));
    CHECK(pl == w.labels(f.video_id, f.frame_index));
  }
  CHECK(pseudo_frames > 0);
  CHECK(fs::exists(dir / "pseudo" / kRecordsFile));
  CHECK(fs::exists(dir / "pseudo" / kExclusionsFile));
}

TEST_CASE("min source iou excludes weak anchors") {
  const auto dir = scratch("minsrc");
  synth::WorldConfig c = margin_world();
  c.videos = 1;
  const DatasetManifest m = synth::generate_dataset(c, dir);
  const synth::World w = synth::load_world(dir);
  OracleSegmenter seg(w, Fidelity::dilated, 0, 3);
  PseudoOptions opt;
  opt.min_source_iou = 1.01;
  const auto run = run_pseudo_pipeline(m, seg, opt, dir / "pseudo");
  CHECK(run.records.empty());
  bool saw = false;
  for (const auto& e : run.exclusions) saw = saw || e.reason == "below_min_source_iou";
  CHECK(saw);
}

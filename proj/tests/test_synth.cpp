#include "phaseseg/core/image_io.hpp"
#include "phaseseg/error.hpp"
#include "phaseseg/synth/world.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace phaseseg;
using namespace phaseseg::synth;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("phaseseg_test_synth_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

WorldConfig small() {
  WorldConfig c;
  c.videos = 3;
  c.frames = 300;
  c.tools = 4;
  c.phases = 6;
  c.seed = 7;
  c.working = {32, 32};
  c.downscale = 2;
  return c;
}

}  // namespace

TEST_CASE("generated datasets are deterministic and validate") {
  const auto a = scratch("det_a"), b = scratch("det_b");
  const DatasetManifest ma = generate_dataset(small(), a);
  const DatasetManifest mb = generate_dataset(small(), b);
  validate_manifest(ma);
  REQUIRE(ma.frames.size() == mb.frames.size());
  CHECK(ma.video_ids().size() == 3);
  CHECK(ma.frames.size() == 3 * 10);
  for (std::size_t i = 0; i < ma.frames.size(); ++i) {
    CHECK(ma.frames[i].video_id == mb.frames[i].video_id);
    CHECK(slurp(ma.resolve(ma.frames[i].image_path)) == slurp(mb.resolve(mb.frames[i].image_path)));
  }
  CHECK(ma.tracks == mb.tracks);
  WorldConfig other = small();
  other.seed = 8;
  const DatasetManifest mc = generate_dataset(other, scratch("det_c"));
  CHECK(read_image(ma.resolve(ma.frames[0].image_path)) != read_image(mc.resolve(mc.frames[0].image_path)));
}

TEST_CASE("every label map passes validation and stays in the taxonomy") {
  const auto dir = scratch("labels");
  const DatasetManifest m = generate_dataset(small(), dir);
  const World world = load_world(dir);
  std::set<int> seen;
  for (const auto& f : m.frames) {
    REQUIRE(f.label_map_path.has_value());
    const LabelMap lab = read_label_map(m.resolve(*f.label_map_path));
    CHECK(lab.width() == 32);
    CHECK(f.phase_id == world.phase(f.video_id, f.frame_index));
    for (auto v : lab.data()) {
      CHECK(v <= 4);
      seen.insert(v);
    }
    for (auto v : lab.data())
      if (v != 0) {
        const auto& act = world.active_tools(f.phase_id);
        CHECK(std::find(act.begin(), act.end(), v) != act.end());
      }
  }
  CHECK(seen.size() >= 3);
}

TEST_CASE("ambiguous pair renders identically and alternates by phase") {
  WorldConfig c = small();
  c.tools = 2;
  c.ambiguous_pair = true;
  const World w(c);
  for (const auto& vid : w.video_ids())
    for (int f = 0; f < c.frames; f += 17) {
      const auto one = w.render(vid, f, std::vector<ClassId>{1});
      const auto two = w.render(vid, f, std::vector<ClassId>{2});
      CHECK(one.image == two.image);
      for (std::size_t i = 0; i < one.labels.data().size(); ++i) {
        const auto a = one.labels.data()[i], b = two.labels.data()[i];
        CHECK((a == 0) == (b == 0));
        if (a) CHECK((a == 1 && b == 2));
      }
      const PhaseId p = w.phase(vid, f);
      const auto labels = w.labels(vid, f);
      for (auto v : labels.data()) {
        if (v == 1) CHECK(p % 2 == 0);
        if (v == 2) CHECK(p % 2 == 1);
      }
    }
  CHECK(w.tool_taxonomy().name_of(1) != w.tool_taxonomy().name_of(2));
}

TEST_CASE("labeling schedule honours label_every and label_margin") {
  WorldConfig c = small();
  c.label_every = 4;
  const World w(c);
  for (const auto& vid : w.video_ids()) {
    const auto frames = w.emitted_frames(vid);
    int human = 0;
    for (int f : frames) human += w.human_labeled(vid, f);
    CHECK(human == static_cast<int>((frames.size() + 3) / 4));
  }
  WorldConfig m = small();
  m.label_margin = 20;
  const World wm(m);
  for (const auto& vid : wm.video_ids())
    for (int f : wm.emitted_frames(vid)) {
      if (!wm.human_labeled(vid, f)) continue;
      for (const auto& seg : wm.track(vid).segments)
        if (f >= seg.start && f < seg.end) {
          CHECK(f - seg.start >= 20);
          CHECK(seg.end - 1 - f >= 20);
        }
    }
}

TEST_CASE("equal phases without jitter") {
  WorldConfig c = small();
  c.phase_length_jitter = 0.0;
  const World w(c);
  for (const auto& seg : w.track(w.video_ids().front()).segments) CHECK(seg.end - seg.start == 50);
}

TEST_CASE("predicted tracks corrupt the stated share of blocks") {
  WorldConfig c = small();
  c.frames = 600;
  const World w(c);
  for (double acc : {1.0, 0.8, 0.5}) {
    const auto vid = w.video_ids().front();
    const PhaseTrack pred = w.predicted_track(vid, acc);
    int wrong_blocks = 0;
    for (int b = 0; b < 20; ++b) wrong_blocks += phase_of_frame(pred, b * 30) != w.phase(vid, b * 30);
    CHECK(wrong_blocks == static_cast<int>(std::lround((1 - acc) * 20)));
  }
}

TEST_CASE("world config round trip and validation") {
  WorldConfig c = small();
  c.ambiguous_pair = true;
  c.tools = 2;
  const auto j = world_config_to_json(c);
  CHECK(world_config_to_json(world_config_from_json(j)) == j);
  WorldConfig bad = small();
  bad.tools = 1;
  bad.ambiguous_pair = true;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = small();
  bad.frames = 3;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("native render downsamples to the working frame") {
  const World w(small());
  const auto vid = w.video_ids().front();
  const auto native = w.render_native(vid, 120);
  CHECK(native.image.width() == 64);
  CHECK(downscale_frame(native.labels, 2) == w.labels(vid, 120));
}

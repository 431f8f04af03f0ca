#include "phaseseg/synth/world.hpp"

#include "phaseseg/core/image_io.hpp"
#include "phaseseg/error.hpp"
#include "phaseseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace phaseseg::synth {

namespace fs = std::filesystem;

void WorldConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::invalid_argument, msg);
  };
  need(videos >= 1, "videos must be >= 1");
  need(tools >= 1 && tools <= 255, "tools must be in [1, 255]");
  need(phases >= 1, "phases must be >= 1");
  need(frames >= phases, "frames must be >= phases");
  need(working.width >= 8 && working.height >= 8, "working resolution must be at least 8x8");
  need(downscale >= 1, "downscale must be >= 1");
  need(frame_stride >= 1, "frame_stride must be >= 1");
  need(frames_per_phase >= 0, "frames_per_phase must be >= 0");
  need(label_every >= 1, "label_every must be >= 1");
  need(label_margin >= 0, "label_margin must be >= 0");
  need(!ambiguous_pair || tools >= 2, "ambiguous_pair needs at least 2 tools");
  need(!ambiguous_pair || phases >= 2, "ambiguous_pair needs at least 2 phases");
  need(rare_tool_boost >= 0, "rare_tool_boost must be >= 0");
  need(phase_length_jitter >= 0 && phase_length_jitter < 1, "phase_length_jitter must be in [0, 1)");
  need(predicted_accuracy >= 0 && predicted_accuracy <= 1, "predicted_accuracy must be in [0, 1]");
  need(predicted_block >= 1, "predicted_block must be >= 1");
}

nlohmann::json world_config_to_json(const WorldConfig& c) {
  return {
      {"videos", c.videos},
      {"frames", c.frames},
      {"tools", c.tools},
      {"phases", c.phases},
      {"seed", c.seed},
      {"working", {{"width", c.working.width}, {"height", c.working.height}}},
      {"downscale", c.downscale},
      {"frame_stride", c.frame_stride},
      {"frames_per_phase", c.frames_per_phase},
      {"label_every", c.label_every},
      {"label_margin", c.label_margin},
      {"ambiguous_pair", c.ambiguous_pair},
      {"rare_tool_boost", c.rare_tool_boost},
      {"phase_length_jitter", c.phase_length_jitter},
      {"predicted_accuracy", c.predicted_accuracy},
      {"predicted_block", c.predicted_block},
  };
}

WorldConfig world_config_from_json(const nlohmann::json& j) {
  try {
    WorldConfig c;
    c.videos = j.at("videos").get<int>();
    c.frames = j.at("frames").get<int>();
    c.tools = j.at("tools").get<int>();
    c.phases = j.at("phases").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.working = {j.at("working").at("width").get<int>(), j.at("working").at("height").get<int>()};
    c.downscale = j.at("downscale").get<int>();
    c.frame_stride = j.at("frame_stride").get<int>();
    c.frames_per_phase = j.at("frames_per_phase").get<int>();
    c.label_every = j.at("label_every").get<int>();
    c.label_margin = j.at("label_margin").get<int>();
    c.ambiguous_pair = j.at("ambiguous_pair").get<bool>();
    c.rare_tool_boost = j.at("rare_tool_boost").get<double>();
    c.phase_length_jitter = j.at("phase_length_jitter").get<double>();
    c.predicted_accuracy = j.at("predicted_accuracy").get<double>();
    c.predicted_block = j.at("predicted_block").get<int>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("world config: ") + e.what());
  }
}

namespace {

std::string video_name(int v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%03d", v);
  return buf;
}

std::string frame_file(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", frame);
  return buf;
}

constexpr std::uint8_t kPalette[][3] = {
    {200, 200, 210}, {90, 170, 230}, {230, 200, 80}, {120, 220, 120},
    {230, 120, 220}, {80, 220, 220}, {240, 150, 60}, {160, 140, 240},
};

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

World::World(WorldConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int C = cfg_.tools;
  const int P = cfg_.phases;

  Rng trng(derive_seed(cfg_.seed, "world.tools"));
  active_.assign(static_cast<std::size_t>(P), {});
  const ClassId first_free = cfg_.ambiguous_pair ? 3 : 1;
  std::vector<int> uses(static_cast<std::size_t>(C + 1), 0);
  for (int p = 0; p < P; ++p) {
    if (cfg_.ambiguous_pair) {
      active_[p].push_back(p % 2 == 0 ? 1 : 2);
      ++uses[active_[p].back()];
    }
    for (ClassId c = first_free; c <= C; ++c)
      if (trng.uniform() < 0.35) {
        active_[p].push_back(c);
        ++uses[c];
      }
  }
  for (ClassId c = first_free; c <= C; ++c)
    if (uses[c] == 0) active_[trng.index(static_cast<std::size_t>(P))].push_back(c);
  if (!cfg_.ambiguous_pair)
    for (int p = 0; p < P; ++p)
      if (active_[p].empty()) active_[p].push_back(static_cast<ClassId>(1 + trng.index(static_cast<std::size_t>(C))));
  for (auto& a : active_) std::sort(a.begin(), a.end());

  const int slots = cfg_.ambiguous_pair ? C - 1 : C;
  Rng arng(derive_seed(cfg_.seed, "world.appearance"));
  for (int s = 0; s < slots; ++s) {
    Appearance a{};
    a.shape = s % 4;
    a.size = arng.uniform(0.85, 1.15);
    a.thickness = arng.uniform(0.8, 1.2);
    for (int k = 0; k < 3; ++k) a.rgb[k] = kPalette[s % 8][k];
    appearance_.push_back(a);
  }

  for (int v = 0; v < cfg_.videos; ++v) {
    Video vid;
    vid.id = video_name(v);
    Rng vr(derive_seed(cfg_.seed, "world.video." + vid.id));
    std::vector<double> w(static_cast<std::size_t>(P));
    double total = 0;
    for (auto& x : w) total += (x = 1.0 + cfg_.phase_length_jitter * vr.uniform(-1, 1));
    vid.track.video_id = vid.id;
    vid.track.num_frames = cfg_.frames;
    double acc = 0;
    int start = 0;
    for (int p = 0; p < P; ++p) {
      acc += w[p];
      int end = p == P - 1 ? cfg_.frames : static_cast<int>(std::lround(acc / total * cfg_.frames));
      end = std::clamp(end, start + 1, cfg_.frames - (P - 1 - p));
      vid.track.segments.push_back({start, end, p});
      start = end;
    }
    vid.bg[0] = static_cast<std::uint8_t>(120 + vr.index(50));
    vid.bg[1] = static_cast<std::uint8_t>(40 + vr.index(30));
    vid.bg[2] = static_cast<std::uint8_t>(40 + vr.index(30));
    vid.bg_fx = vr.uniform(0.01, 0.05);
    vid.bg_fy = vr.uniform(0.01, 0.05);
    vid.bg_offset = vr.uniform(0, 2 * std::numbers::pi);
    for (int s = 0; s < slots; ++s) {
      Motion m{};
      m.cx = vr.uniform(0.35, 0.65);
      m.cy = vr.uniform(0.35, 0.65);
      m.ax = vr.uniform(0.08, 0.2);
      m.ay = vr.uniform(0.08, 0.2);
      m.period_x = vr.uniform(60, 180);
      m.period_y = vr.uniform(60, 180);
      m.offset_x = vr.uniform(0, 2 * std::numbers::pi);
      m.offset_y = vr.uniform(0, 2 * std::numbers::pi);
      m.angle0 = vr.uniform(0, std::numbers::pi);
      m.spin = vr.uniform(0.2, 0.6);
      m.spin_period = vr.uniform(90, 240);
      vid.motion.push_back(m);
    }
    videos_.push_back(std::move(vid));
  }
}

int World::slot_of(ClassId c) const noexcept {
  if (!cfg_.ambiguous_pair) return c - 1;
  return c <= 2 ? 0 : c - 2;
}

const World::Video& World::video(const std::string& id) const {
  for (const auto& v : videos_)
    if (v.id == id) return v;
  fail(ErrorKind::not_found, "unknown video '" + id + "'");
}

ToolTaxonomy World::tool_taxonomy() const {
  std::vector<std::string> names;
  for (ClassId c = 1; c <= cfg_.tools; ++c) {
    if (cfg_.ambiguous_pair && c <= 2)
      names.push_back(c == 1 ? "pair_a" : "pair_b");
    else
      names.push_back("tool_" + std::to_string(c));
  }
  return ToolTaxonomy::from_names(names);
}

PhaseTaxonomy World::phase_taxonomy() const {
  std::vector<std::string> names;
  for (int p = 0; p < cfg_.phases; ++p) names.push_back("phase_" + std::to_string(p));
  return PhaseTaxonomy::from_names(names);
}

std::vector<std::string> World::video_ids() const {
  std::vector<std::string> ids;
  for (const auto& v : videos_) ids.push_back(v.id);
  return ids;
}

const PhaseTrack& World::track(const std::string& video_id) const { return video(video_id).track; }

PhaseId World::phase(const std::string& video_id, int frame) const {
  return phase_of_frame(video(video_id).track, frame);
}

const std::vector<ClassId>& World::active_tools(PhaseId phase) const {
  if (phase < 0 || phase >= cfg_.phases) fail(ErrorKind::invalid_argument, "phase out of range");
  return active_[phase];
}

RenderedFrame World::render_native(const std::string& video_id, int frame,
                                   const std::optional<std::vector<ClassId>>& active) const {
  const Video& vid = video(video_id);
  if (frame < 0 || frame >= cfg_.frames) fail(ErrorKind::invalid_argument, "frame out of range");
  const Resolution res = cfg_.native();
  const int W = res.width;
  const int H = res.height;
  const double S = std::min(W, H);
  std::vector<double> rgb(static_cast<std::size_t>(W) * H * 3);
  LabelMap labels(W, H);

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double wave = 18.0 * std::sin(vid.bg_fx * x * 256.0 / W + vid.bg_fy * y * 256.0 / H + vid.bg_offset);
      for (int k = 0; k < 3; ++k) rgb[(static_cast<std::size_t>(y) * W + x) * 3 + k] = vid.bg[k] + wave;
    }

  std::vector<ClassId> tools = active ? *active : active_[phase_of_frame(vid.track, frame)];
  std::sort(tools.begin(), tools.end());
  const double two_pi = 2 * std::numbers::pi;
  for (ClassId c : tools) {
    if (c < 1 || c > cfg_.tools) fail(ErrorKind::invalid_argument, "tool id out of range");
    const int s = slot_of(c);
    const Motion& m = vid.motion[s];
    const Appearance& a = appearance_[s];
    const double cx = (m.cx + m.ax * std::sin(two_pi * frame / m.period_x + m.offset_x)) * W;
    const double cy = (m.cy + m.ay * std::sin(two_pi * frame / m.period_y + m.offset_y)) * H;
    const double ang = m.angle0 + m.spin * std::sin(two_pi * frame / m.spin_period);
    const double ca = std::cos(ang);
    const double sa = std::sin(ang);
    // Half extents along the tool axis (u) and across it (v), in pixels.
    double hu = 0;
    double hv = 0;
    switch (a.shape) {
      case 0: hu = 0.20 * S * a.size; hv = 0.035 * S * a.thickness; break;   // bar
      case 1: hu = hv = 0.10 * S * a.size; break;                           // disk
      case 2: hu = 0.16 * S * a.size; hv = 0.07 * S * a.thickness; break;   // ellipse
      default: hu = hv = 0.11 * S * a.size; break;                          // ring
    }
    const double ring_inner = hu - 0.04 * S * a.thickness;
    const double reach = std::max(hu, hv) + 1;
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - reach)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(cy + reach)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(cx + reach)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - cx;
        const double dy = y + 0.5 - cy;
        const double u = dx * ca + dy * sa;
        const double v = -dx * sa + dy * ca;
        bool inside = false;
        switch (a.shape) {
          case 0: inside = std::abs(u) <= hu && std::abs(v) <= hv; break;
          case 1: inside = u * u + v * v <= hu * hu; break;
          case 2: inside = (u / hu) * (u / hu) + (v / hv) * (v / hv) <= 1.0; break;
          default: {
            const double r2 = u * u + v * v;
            inside = r2 <= hu * hu && r2 >= ring_inner * ring_inner;
          }
        }
        if (!inside) continue;
        const double shade = 0.8 + 0.2 * (u / hu + 1) / 2;
        for (int k = 0; k < 3; ++k) rgb[(static_cast<std::size_t>(y) * W + x) * 3 + k] = a.rgb[k] * shade;
        labels(y, x) = static_cast<std::uint8_t>(c);
      }
  }

  Rng noise(derive_seed(cfg_.seed, "world.noise." + video_id + "." + std::to_string(frame)));
  Image img(W, H, 3);
  auto out = img.data();
  for (std::size_t i = 0; i < rgb.size(); ++i) out[i] = clamp_u8(rgb[i] + noise.uniform(-6, 6));
  return {std::move(img), std::move(labels)};
}

RenderedFrame World::render(const std::string& video_id, int frame,
                            const std::optional<std::vector<ClassId>>& active) const {
  RenderedFrame f = render_native(video_id, frame, active);
  if (cfg_.downscale == 1) return f;
  return {downscale_frame(f.image, cfg_.downscale), downscale_frame(f.labels, cfg_.downscale)};
}

std::vector<int> World::emitted_frames(const std::string& video_id) const {
  const Video& vid = video(video_id);
  std::vector<int> frames;
  if (cfg_.frames_per_phase == 0) {
    for (int f = 0; f < cfg_.frames; f += cfg_.frame_stride) frames.push_back(f);
  } else {
    for (const auto& seg : vid.track.segments) {
      const int len = seg.end - seg.start;
      for (int i = 0; i < cfg_.frames_per_phase; ++i)
        frames.push_back(seg.start + static_cast<int>((i + 0.5) * len / cfg_.frames_per_phase));
    }
    std::sort(frames.begin(), frames.end());
    frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
  }
  if (cfg_.rare_tool_boost > 0) {
    // Rarest tool: active in the fewest phases, ties to the higher id.
    std::vector<int> uses(static_cast<std::size_t>(cfg_.tools + 1), 0);
    for (const auto& a : active_)
      for (ClassId c : a) ++uses[c];
    ClassId rare = 1;
    for (ClassId c = 1; c <= cfg_.tools; ++c)
      if (uses[c] > 0 && (uses[c] <= uses[rare] || uses[rare] == 0)) rare = c;
    std::vector<int> candidates;
    for (int f = cfg_.frame_stride / 2; f < cfg_.frames; f += std::max(1, cfg_.frame_stride)) {
      const auto& act = active_[phase_of_frame(vid.track, f)];
      if (std::find(act.begin(), act.end(), rare) != act.end() && !std::binary_search(frames.begin(), frames.end(), f))
        candidates.push_back(f);
    }
    Rng rr(derive_seed(cfg_.seed, "world.rare." + video_id));
    rr.shuffle(candidates.begin(), candidates.end());
    const auto extra = std::min(candidates.size(),
                                static_cast<std::size_t>(std::lround(cfg_.rare_tool_boost * frames.size())));
    frames.insert(frames.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(extra));
    std::sort(frames.begin(), frames.end());
  }
  return frames;
}

bool World::human_labeled(const std::string& video_id, int frame) const {
  const Video& vid = video(video_id);
  const auto frames = emitted_frames(video_id);
  const auto it = std::lower_bound(frames.begin(), frames.end(), frame);
  if (it == frames.end() || *it != frame) return false;
  if (cfg_.label_every > 1) {
    const bool on_grid = cfg_.frames_per_phase == 0 && frame % cfg_.frame_stride == 0;
    const long position = on_grid ? frame / cfg_.frame_stride : it - frames.begin();
    if (position % cfg_.label_every != 0) return false;
  }
  if (cfg_.label_margin > 0) {
    for (const auto& seg : vid.track.segments)
      if (frame >= seg.start && frame < seg.end)
        return frame - seg.start >= cfg_.label_margin && seg.end - 1 - frame >= cfg_.label_margin;
    return false;
  }
  return true;
}

PhaseTrack World::predicted_track(const std::string& video_id, double accuracy) const {
  const Video& vid = video(video_id);
  const int N = cfg_.frames;
  const int B = cfg_.predicted_block;
  std::vector<PhaseId> per_frame(static_cast<std::size_t>(N));
  for (int f = 0; f < N; ++f) per_frame[f] = phase_of_frame(vid.track, f);
  const int blocks = (N + B - 1) / B;
  std::vector<int> order(static_cast<std::size_t>(blocks));
  for (int b = 0; b < blocks; ++b) order[b] = b;
  Rng rng(derive_seed(cfg_.seed, "world.predicted." + video_id));
  rng.shuffle(order.begin(), order.end());
  const int wrong = cfg_.phases > 1 ? static_cast<int>(std::lround((1.0 - accuracy) * blocks)) : 0;
  for (int i = 0; i < wrong; ++i) {
    const int b = order[i];
    const PhaseId truth = per_frame[static_cast<std::size_t>(b) * B];
    PhaseId other = static_cast<PhaseId>(rng.index(static_cast<std::size_t>(cfg_.phases - 1)));
    if (other >= truth) ++other;
    for (int f = b * B; f < std::min(N, (b + 1) * B); ++f) per_frame[f] = other;
  }
  PhaseTrack t;
  t.video_id = video_id;
  t.num_frames = N;
  int start = 0;
  for (int f = 1; f <= N; ++f)
    if (f == N || per_frame[f] != per_frame[start]) {
      t.segments.push_back({start, f, per_frame[start]});
      start = f;
    }
  return t;
}

DatasetManifest generate_dataset(const WorldConfig& cfg, const fs::path& dir) {
  const World world(cfg);
  fs::create_directories(dir);
  DatasetManifest m;
  m.tools = world.tool_taxonomy();
  m.phases = world.phase_taxonomy();
  m.native_resolution = cfg.native();
  m.working_resolution = cfg.working;
  m.root = dir;
  for (const auto& id : world.video_ids()) {
    m.tracks.push_back(world.track(id));
    save_phase_track(world.predicted_track(id, cfg.predicted_accuracy), dir / kPredictedPhaseDir / (id + ".json"));
    for (int f : world.emitted_frames(id)) {
      const RenderedFrame r = world.render(id, f);
      FrameRecord rec;
      rec.video_id = id;
      rec.frame_index = f;
      rec.image_path = fs::path("images") / id / frame_file(f);
      rec.width = r.image.width();
      rec.height = r.image.height();
      rec.phase_id = world.phase(id, f);
      write_image(dir / rec.image_path, r.image);
      write_label_map(dir / "gt" / id / frame_file(f), r.labels);
      if (world.human_labeled(id, f)) {
        rec.label_map_path = fs::path("labels") / id / frame_file(f);
        rec.provenance = Provenance::human;
        write_label_map(dir / *rec.label_map_path, r.labels);
      }
      m.frames.push_back(std::move(rec));
    }
  }
  save_manifest(m, dir);
  std::ofstream(dir / kWorldFile) << world_config_to_json(cfg).dump(2) << '\n';
  return load_manifest(dir);
}

World load_world(const fs::path& dataset_dir) {
  const fs::path p = dataset_dir / kWorldFile;
  std::ifstream in(p);
  if (!in) fail(ErrorKind::io, "cannot open " + p.string());
  try {
    return World(world_config_from_json(nlohmann::json::parse(in)));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::parse, p.string() + ": " + e.what());
  }
}

}  // namespace phaseseg::synth

#include "phaseseg/core/manifest.hpp"

#include "phaseseg/core/image_io.hpp"
#include "phaseseg/error.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace phaseseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::human: return "human";
    case Provenance::pseudo: return "pseudo";
    case Provenance::none: return "none";
  }
  return "none";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "human") return Provenance::human;
  if (s == "pseudo") return Provenance::pseudo;
  if (s == "none") return Provenance::none;
  fail(ErrorKind::parse, "unknown label provenance '" + std::string(s) + "'");
}

const PhaseTrack* DatasetManifest::track(const std::string& video_id) const {
  for (const auto& t : tracks)
    if (t.video_id == video_id) return &t;
  return nullptr;
}

const FrameRecord* DatasetManifest::find_frame(const std::string& video_id,
                                               int frame_index) const {
  for (const auto& f : frames)
    if (f.frame_index == frame_index && f.video_id == video_id) return &f;
  return nullptr;
}

std::vector<std::string> DatasetManifest::video_ids() const {
  std::set<std::string> ids;
  for (const auto& t : tracks) ids.insert(t.video_id);
  return {ids.begin(), ids.end()};
}

fs::path DatasetManifest::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : root / p;
}

namespace {

json named_ids_to_json(const std::vector<NamedId>& items) {
  json arr = json::array();
  for (const auto& item : items) arr.push_back({{"id", item.id}, {"name", item.name}});
  return arr;
}

std::vector<NamedId> named_ids_from_json(const json& j) {
  std::vector<NamedId> out;
  for (const auto& item : j) out.push_back({item.at("id").get<int>(), item.at("name").get<std::string>()});
  return out;
}

json resolution_to_json(const Resolution& r) {
  return {{"width", r.width}, {"height", r.height}};
}

Resolution resolution_from_json(const json& j) {
  return {j.at("width").get<int>(), j.at("height").get<int>()};
}

json frame_to_json(const FrameRecord& f, const fs::path& image, const std::optional<fs::path>& label) {
  json j = {{"video_id", f.video_id},
            {"frame_index", f.frame_index},
            {"image_path", image.generic_string()},
            {"width", f.width},
            {"height", f.height},
            {"phase_id", f.phase_id},
            {"label_provenance", std::string(to_string(f.provenance))}};
  if (label) j["label_map_path"] = label->generic_string();
  return j;
}

FrameRecord frame_from_json(const json& j) {
  FrameRecord f;
  f.video_id = j.at("video_id").get<std::string>();
  f.frame_index = j.at("frame_index").get<int>();
  f.image_path = j.at("image_path").get<std::string>();
  f.width = j.at("width").get<int>();
  f.height = j.at("height").get<int>();
  f.phase_id = j.at("phase_id").get<int>();
  if (j.contains("label_map_path")) f.label_map_path = fs::path(j.at("label_map_path").get<std::string>());
  f.provenance = provenance_from_string(j.at("label_provenance").get<std::string>());
  return f;
}

std::string frame_ref(const FrameRecord& f) {
  return "video " + f.video_id + " frame " + std::to_string(f.frame_index);
}

fs::path relative_to(const fs::path& resolved, const fs::path& dir) {
  const fs::path abs_target = fs::absolute(resolved).lexically_normal();
  const fs::path abs_dir = fs::absolute(dir).lexically_normal();
  fs::path rel = abs_target.lexically_relative(abs_dir);
  return rel.empty() ? abs_target : rel;
}

}  // namespace

json phase_track_to_json(const PhaseTrack& track) {
  json segs = json::array();
  for (const auto& s : track.segments) segs.push_back({s.start, s.end, s.phase});
  return {{"video_id", track.video_id}, {"num_frames", track.num_frames}, {"segments", segs}};
}

PhaseTrack phase_track_from_json(const json& j) {
  PhaseTrack t;
  t.video_id = j.at("video_id").get<std::string>();
  t.num_frames = j.at("num_frames").get<int>();
  for (const auto& s : j.at("segments")) {
    if (!s.is_array() || s.size() != 3) fail(ErrorKind::parse, "segment must be [start, end, phase]");
    t.segments.push_back({s[0].get<int>(), s[1].get<int>(), s[2].get<int>()});
  }
  return t;
}

void save_phase_track(const PhaseTrack& track, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << phase_track_to_json(track).dump(2) << '\n';
}

PhaseTrack load_phase_track(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::not_found, "missing phase track file " + path.string());
  try {
    return phase_track_from_json(json::parse(in));
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

void validate_manifest(const DatasetManifest& m, bool check_files) {
  m.tools.validate();
  m.phases.validate();
  for (const Resolution& r : {m.native_resolution, m.working_resolution}) {
    if (r.width <= 0 || r.height <= 0) fail(ErrorKind::validation, "resolutions must be positive");
  }
  std::map<std::string, const PhaseTrack*> tracks;
  for (const auto& t : m.tracks) {
    t.validate(m.phases);
    if (!tracks.emplace(t.video_id, &t).second) {
      fail(ErrorKind::validation, "duplicate phase track for video " + t.video_id);
    }
  }
  std::set<std::pair<std::string, int>> seen;
  for (const auto& f : m.frames) {
    if (!seen.emplace(f.video_id, f.frame_index).second) {
      fail(ErrorKind::validation, "duplicate frame record for " + frame_ref(f));
    }
    auto it = tracks.find(f.video_id);
    if (it == tracks.end()) fail(ErrorKind::validation, "no phase track for " + frame_ref(f));
    if (f.frame_index < 0 || f.frame_index >= it->second->num_frames) {
      fail(ErrorKind::validation, frame_ref(f) + " lies outside the video");
    }
    const PhaseId expected = phase_of_frame(*it->second, f.frame_index);
    if (expected != f.phase_id) {
      fail(ErrorKind::validation, frame_ref(f) + " has phase " + std::to_string(f.phase_id) +
                                      " but its phase track says " + std::to_string(expected));
    }
    if (f.width <= 0 || f.height <= 0) fail(ErrorKind::validation, frame_ref(f) + " has no size");
    if (f.labeled() != f.label_map_path.has_value()) {
      fail(ErrorKind::validation, frame_ref(f) + " provenance '" +
                                      std::string(to_string(f.provenance)) +
                                      "' disagrees with label map presence");
    }
    if (check_files) {
      if (!fs::exists(m.resolve(f.image_path))) {
        fail(ErrorKind::validation, frame_ref(f) + " image not found: " + f.image_path.string());
      }
      if (f.label_map_path) {
        const fs::path lp = m.resolve(*f.label_map_path);
        if (!fs::exists(lp)) {
          fail(ErrorKind::validation, frame_ref(f) + " label map not found: " + lp.string());
        }
        const auto [w, h] = png_dimensions(lp);
        if (w != f.width || h != f.height) {
          fail(ErrorKind::validation, frame_ref(f) + " label map is " + std::to_string(w) + "x" +
                                          std::to_string(h) + ", frame is " +
                                          std::to_string(f.width) + "x" +
                                          std::to_string(f.height));
        }
      }
    }
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  const fs::path manifest_path = fs::is_directory(path) ? path / kManifestFile : path;
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::io, "cannot open manifest " + manifest_path.string());
  DatasetManifest m;
  m.root = manifest_path.parent_path();
  fs::path frames_path;
  try {
    const json doc = json::parse(in);
    m.tools.classes = named_ids_from_json(doc.at("tool_taxonomy"));
    m.phases.phases = named_ids_from_json(doc.at("phase_taxonomy"));
    m.native_resolution = resolution_from_json(doc.at("native_resolution"));
    m.working_resolution = resolution_from_json(doc.at("working_resolution"));
    for (const auto& t : doc.at("videos")) m.tracks.push_back(phase_track_from_json(t));
    frames_path = m.root / doc.value("frames_file", std::string(kFramesFile));
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, manifest_path.string() + ": " + e.what());
  }
  std::ifstream frames_in(frames_path);
  if (!frames_in) fail(ErrorKind::io, "cannot open frame table " + frames_path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(frames_in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.frames.push_back(frame_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, frames_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate_manifest(m, true);
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& dir) {
  fs::create_directories(dir);
  json videos = json::array();
  std::vector<const PhaseTrack*> sorted;
  for (const auto& t : m.tracks) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const PhaseTrack* a, const PhaseTrack* b) { return a->video_id < b->video_id; });
  for (const auto* t : sorted) videos.push_back(phase_track_to_json(*t));
  const json doc = {{"format_version", 1},
                    {"tool_taxonomy", named_ids_to_json(m.tools.classes)},
                    {"phase_taxonomy", named_ids_to_json(m.phases.phases)},
                    {"native_resolution", resolution_to_json(m.native_resolution)},
                    {"working_resolution", resolution_to_json(m.working_resolution)},
                    {"videos", videos},
                    {"frames_file", kFramesFile}};
  {
    std::ofstream out(dir / kManifestFile);
    if (!out) fail(ErrorKind::io, "cannot write manifest in " + dir.string());
    out << doc.dump(2) << '\n';
  }
  std::vector<const FrameRecord*> frames;
  for (const auto& f : m.frames) frames.push_back(&f);
  std::sort(frames.begin(), frames.end(), [](const FrameRecord* a, const FrameRecord* b) {
    return std::tie(a->video_id, a->frame_index) < std::tie(b->video_id, b->frame_index);
  });
  std::ofstream out(dir / kFramesFile);
  if (!out) fail(ErrorKind::io, "cannot write frame table in " + dir.string());
  for (const auto* f : frames) {
    std::optional<fs::path> label;
    if (f->label_map_path) label = relative_to(m.resolve(*f->label_map_path), dir);
    out << frame_to_json(*f, relative_to(m.resolve(f->image_path), dir), label).dump() << '\n';
  }
}

}  // namespace phaseseg

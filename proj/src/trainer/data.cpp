#include "phaseseg/trainer/data.hpp"

#include "phaseseg/core/image_io.hpp"
#include "phaseseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace phaseseg::trainer {

namespace fs = std::filesystem;

TrackMap load_predicted_tracks(const fs::path& dir, const std::vector<std::string>& videos) {
  TrackMap out;
  for (const auto& v : videos) {
    const fs::path p = dir / (v + ".json");
    if (!fs::exists(p)) fail(ErrorKind::not_found, "no predicted phase track for video " + v + " at " + p.string());
    PhaseTrack t = load_phase_track(p);
    if (t.video_id != v) fail(ErrorKind::validation, p.string() + " holds the track of " + t.video_id);
    out.emplace(v, std::move(t));
  }
  return out;
}

PhaseId phase_source_resolve(PhaseSource source, const FrameRecord& frame, const DatasetManifest& manifest,
                             const TrackMap& predicted) {
  switch (source) {
    case PhaseSource::none:
      return kNullPhase;
    case PhaseSource::ground_truth: {
      const PhaseTrack* t = manifest.track(frame.video_id);
      if (!t) fail(ErrorKind::not_found, "no phase track for video " + frame.video_id);
      return phase_of_frame(*t, frame.frame_index);
    }
    case PhaseSource::predicted_file: {
      auto it = predicted.find(frame.video_id);
      if (it == predicted.end()) fail(ErrorKind::not_found, "no predicted phase track for video " + frame.video_id);
      return phase_of_frame(it->second, frame.frame_index);
    }
  }
  return kNullPhase;
}

PhaseResolver::PhaseResolver(const TrainConfig& config, const DatasetManifest& manifest,
                             const std::vector<std::string>& videos)
    : source_(config.spec().phase_source), manifest_(&manifest) {
  if (source_ == PhaseSource::predicted_file) {
    fs::path dir = config.predicted_phase_dir;
    if (dir.is_relative()) dir = manifest.root / dir;
    predicted_ = load_predicted_tracks(dir, videos);
  }
}

PhaseResolver::PhaseResolver(PhaseSource source, const DatasetManifest& manifest, TrackMap predicted)
    : source_(source), manifest_(&manifest), predicted_(std::move(predicted)) {}

PhaseId PhaseResolver::operator()(const FrameRecord& frame) const {
  return phase_source_resolve(source_, frame, *manifest_, predicted_);
}

namespace {

template <typename R>
int working_factor(const R& r, Resolution working) {
  if (r.width() == working.width && r.height() == working.height) return 1;
  if (working.width > 0 && working.height > 0 && r.width() % working.width == 0 &&
      r.height() % working.height == 0 && r.width() / working.width == r.height() / working.height) {
    return r.width() / working.width;
  }
  fail(ErrorKind::shape_mismatch, "frame of " + std::to_string(r.width()) + "x" + std::to_string(r.height()) +
                                      " cannot be brought to the working resolution " +
                                      std::to_string(working.width) + "x" + std::to_string(working.height));
}

}  // namespace

Image to_working(const Image& image, Resolution working) {
  const int f = working_factor(image, working);
  return f == 1 ? image : downscale_frame(image, f);
}

LabelMap to_working(const LabelMap& labels, Resolution working) {
  const int f = working_factor(labels, working);
  return f == 1 ? labels : downscale_frame(labels, f);
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, const std::vector<std::string>& videos,
                                 FrameFilter filter, const PhaseResolver& phases) {
  const std::set<std::string> wanted(videos.begin(), videos.end());
  std::vector<Sample> out;
  for (const auto& f : manifest.frames) {
    if (!wanted.count(f.video_id) || !f.label_map_path) continue;
    if (filter == FrameFilter::human && f.provenance != Provenance::human) continue;
    if (filter == FrameFilter::pseudo && f.provenance != Provenance::pseudo) continue;
    if (f.provenance == Provenance::none) continue;
    Sample s;
    s.video_id = f.video_id;
    s.frame_index = f.frame_index;
    s.provenance = f.provenance;
    s.phase = phases(f);
    s.image = to_working(read_image(manifest.resolve(f.image_path)), manifest.working_resolution);
    s.labels = to_working(read_label_map(manifest.resolve(*f.label_map_path)), manifest.working_resolution);
    if (s.image.channels() != 3) fail(ErrorKind::shape_mismatch, "expected an RGB image for " + f.image_path.string());
    const int tools = manifest.tools.num_tools();
    for (auto v : s.labels.data())
      if (v > tools) {
        fail(ErrorKind::validation, "label map " + f.label_map_path->string() + " holds class " + std::to_string(v) +
                                        " outside the taxonomy");
      }
    out.push_back(std::move(s));
  }
  return out;
}

void augment_sample(Image& image, LabelMap& labels, Rng& rng, double max_degrees) {
  const bool flip = rng.uniform() < 0.5;
  const double theta = rng.uniform(-max_degrees, max_degrees) * std::numbers::pi / 180.0;
  const int w = image.width();
  const int h = image.height();
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  auto reflect = [](int v, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    v %= period;
    if (v < 0) v += period;
    return v < n ? v : period - v;
  };
  Image img(w, h, image.channels());
  LabelMap lab(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      int sx = static_cast<int>(std::lround(cx + c * dx + s * dy));
      const int sy = reflect(static_cast<int>(std::lround(cy - s * dx + c * dy)), h);
      sx = reflect(sx, w);
      if (flip) sx = w - 1 - sx;
      for (int ch = 0; ch < image.channels(); ++ch) img.at(y, x, ch) = image.at(sy, sx, ch);
      lab(y, x) = labels(sy, sx);
    }
  }
  image = std::move(img);
  labels = std::move(lab);
}

}  // namespace phaseseg::trainer

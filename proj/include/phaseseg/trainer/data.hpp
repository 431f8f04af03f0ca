#pragma once

#include "phaseseg/core/manifest.hpp"
#include "phaseseg/core/raster.hpp"
#include "phaseseg/rng.hpp"
#include "phaseseg/trainer/config.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace phaseseg::trainer {

using TrackMap = std::map<std::string, PhaseTrack>;

/// Reads `<dir>/<video>.json` for every listed video; a missing file is a not_found error.
TrackMap load_predicted_tracks(const std::filesystem::path& dir, const std::vector<std::string>& videos);

/// Phase fed to the network for a frame under the given source.
PhaseId phase_source_resolve(PhaseSource source, const FrameRecord& frame, const DatasetManifest& manifest,
                             const TrackMap& predicted);

/// Binds a phase source to its tracks so frames can be resolved one by one.
class PhaseResolver {
 public:
  PhaseResolver(const TrainConfig& config, const DatasetManifest& manifest, const std::vector<std::string>& videos);
  PhaseResolver(PhaseSource source, const DatasetManifest& manifest, TrackMap predicted = {});

  PhaseId operator()(const FrameRecord& frame) const;
  PhaseSource source() const noexcept { return source_; }

 private:
  PhaseSource source_;
  const DatasetManifest* manifest_;
  TrackMap predicted_;
};

struct Sample {
  std::string video_id;
  int frame_index = 0;
  Provenance provenance = Provenance::none;
  PhaseId phase = kNullPhase;
  Image image;
  LabelMap labels;
};

enum class FrameFilter { human, pseudo, labeled };

/// Labeled frames of the given videos at working resolution, in manifest order.
std::vector<Sample> load_samples(const DatasetManifest& manifest, const std::vector<std::string>& videos,
                                 FrameFilter filter, const PhaseResolver& phases);

/// Brings an image (or label map) to the working resolution: unchanged when it
/// already matches, integer-factor downscaling otherwise.
Image to_working(const Image& image, Resolution working);
LabelMap to_working(const LabelMap& labels, Resolution working);

/// Random horizontal flip and a rotation within +-max_degrees, applied to
/// image and labels alike (nearest sampling, reflected borders).
void augment_sample(Image& image, LabelMap& labels, Rng& rng, double max_degrees = 10.0);

}  // namespace phaseseg::trainer

#pragma once

#include "phaseseg/core/manifest.hpp"
#include "phaseseg/core/raster.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace phaseseg::synth {

/// Parameters of a synthetic surgical world. Everything the generator emits
/// is a pure function of this struct.
struct WorldConfig {
  int videos = 5;
  int frames = 300;  // native frames per video
  int tools = 4;
  int phases = 6;
  std::uint64_t seed = 7;
  Resolution working{64, 64};
  int downscale = 4;  // native = working * downscale
  int frame_stride = 30;
  /// Frames per phase taken uniformly inside each phase instead of the
  /// stride grid; 0 keeps the stride grid.
  int frames_per_phase = 0;
  /// Every n-th emitted frame of a video is human-labeled, the rest carry no label.
  int label_every = 1;
  /// Human-labeled frames must lie at least this many native frames from a
  /// phase boundary (0 disables the rule).
  int label_margin = 0;
  /// Classes 1 and 2 are rendered identically and alternate by phase.
  bool ambiguous_pair = false;
  /// Extra frames, as a fraction of the regular count, drawn where the rarest tool is visible.
  double rare_tool_boost = 0.0;
  /// Relative spread of phase lengths; 0 gives equal phases.
  double phase_length_jitter = 0.2;
  /// Accuracy of the emitted predicted-phase tracks (fraction of blocks kept).
  double predicted_accuracy = 0.8;
  int predicted_block = 30;

  void validate() const;
  Resolution native() const noexcept { return {working.width * downscale, working.height * downscale}; }
};

nlohmann::json world_config_to_json(const WorldConfig& cfg);
WorldConfig world_config_from_json(const nlohmann::json& j);

struct RenderedFrame {
  Image image;
  LabelMap labels;
};

class World {
 public:
  explicit World(WorldConfig cfg);

  const WorldConfig& config() const noexcept { return cfg_; }
  ToolTaxonomy tool_taxonomy() const;
  PhaseTaxonomy phase_taxonomy() const;
  std::vector<std::string> video_ids() const;
  const PhaseTrack& track(const std::string& video_id) const;
  PhaseId phase(const std::string& video_id, int frame) const;

  /// Tools visible in a phase.
  const std::vector<ClassId>& active_tools(PhaseId phase) const;

  /// Frame at working resolution. `active` overrides the tool set drawn.
  RenderedFrame render(const std::string& video_id, int frame,
                       const std::optional<std::vector<ClassId>>& active = std::nullopt) const;
  RenderedFrame render_native(const std::string& video_id, int frame,
                              const std::optional<std::vector<ClassId>>& active = std::nullopt) const;
  /// Ground-truth labels at working resolution.
  LabelMap labels(const std::string& video_id, int frame) const { return render(video_id, frame).labels; }

  /// Native frame indices emitted into the dataset for a video, sorted.
  std::vector<int> emitted_frames(const std::string& video_id) const;
  bool human_labeled(const std::string& video_id, int frame) const;

  /// Ground-truth track with blocks reassigned to a different random phase
  /// so that round((1 - accuracy) * blocks) blocks are wrong.
  PhaseTrack predicted_track(const std::string& video_id, double accuracy) const;

 private:
  struct Motion {
    double cx, cy, ax, ay, period_x, period_y, offset_x, offset_y, angle0, spin, spin_period;
  };
  struct Appearance {
    int shape;
    double size;
    double thickness;
    std::uint8_t rgb[3];
  };
  struct Video {
    std::string id;
    PhaseTrack track;
    std::uint8_t bg[3];
    double bg_fx, bg_fy, bg_offset;
    std::vector<Motion> motion;  // per tool slot
  };

  const Video& video(const std::string& id) const;
  int slot_of(ClassId c) const noexcept;

  WorldConfig cfg_;
  std::vector<std::vector<ClassId>> active_;  // per phase
  std::vector<Appearance> appearance_;        // per slot
  std::vector<Video> videos_;
};

/// Writes images/, labels/, predicted_phases/, manifest.json, frames.jsonl
/// and world.json into `dir`. Returns the manifest as written.
DatasetManifest generate_dataset(const WorldConfig& cfg, const std::filesystem::path& dir);

inline constexpr const char* kWorldFile = "world.json";
inline constexpr const char* kPredictedPhaseDir = "predicted_phases";

/// Rebuilds the world stored next to a generated dataset.
World load_world(const std::filesystem::path& dataset_dir);

}  // namespace phaseseg::synth

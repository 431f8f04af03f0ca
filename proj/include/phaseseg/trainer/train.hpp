#pragma once

#include "phaseseg/core/splits.hpp"
#include "phaseseg/maskops/metrics.hpp"
#include "phaseseg/segnet/checkpoint.hpp"
#include "phaseseg/segnet/unet.hpp"
#include "phaseseg/trainer/config.hpp"
#include "phaseseg/trainer/data.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <vector>

namespace phaseseg::trainer {

enum class Stage { supervised, pseudo_pretrain, finetune };

std::string_view to_string(Stage s) noexcept;
Stage stage_from_string(std::string_view s);

/// The checkpoint a stage selected: the epoch with the highest validation mean DSC.
struct CheckpointMeta {
  int epoch = 0;
  double val_mean_dsc = 0.0;
  std::filesystem::path path;
  Stage stage = Stage::supervised;
  /// False when the epoch callback interrupted the stage.
  bool completed = true;
};

nlohmann::json checkpoint_meta_to_json(const CheckpointMeta& m);
CheckpointMeta checkpoint_meta_from_json(const nlohmann::json& j);

struct EpochRecord {
  Stage stage = Stage::supervised;
  int epoch = 0;
  double train_loss = 0.0;
  double val_mean_dsc = 0.0;
  double val_mean_iou = 0.0;
  bool improved = false;
};

nlohmann::json epoch_record_to_json(const EpochRecord& r);
EpochRecord epoch_record_from_json(const nlohmann::json& j);
std::vector<EpochRecord> read_curve(const std::filesystem::path& path);

/// Epochs are 1-based. A score counts as an improvement only when strictly
/// greater than the best so far; training stops once `patience` epochs have
/// passed since the best one.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  bool observe(int epoch, double score);
  bool should_stop(int epoch) const noexcept { return best_epoch_ > 0 && epoch - best_epoch_ >= patience_; }
  int best_epoch() const noexcept { return best_epoch_; }
  double best_score() const noexcept { return best_score_; }
  void restore(int best_epoch, double best_score) noexcept;

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_score_ = 0.0;
};

struct TrainOptions {
  /// Continue from last.ckpt when its stage fingerprint matches.
  bool resume = true;
  std::ostream* log = nullptr;
  /// Called after every epoch; returning false interrupts training.
  std::function<bool(const EpochRecord&)> on_epoch;
};

segnet::NetworkConfig network_config_for(const TrainConfig& config, const DatasetManifest& manifest);

/// Predictions for every sample, in order.
std::vector<LabelMap> predict_samples(segnet::UNet<float>& net, const std::vector<Sample>& samples, int batch_size);

ClassMetrics evaluate_model(segnet::UNet<float>& net, const std::vector<Sample>& samples, int num_tools,
                            Aggregation aggregation, int batch_size);

struct StageInput {
  Stage stage = Stage::supervised;
  const std::vector<Sample>* train = nullptr;
  const std::vector<Sample>* val = nullptr;
  const segnet::Checkpoint* init = nullptr;
};

/// One training stage into `dir`: curve.jsonl, best.ckpt, last.ckpt (with
/// optimizer moments) and done.json once the stage has finished.
CheckpointMeta run_stage(const StageInput& input, const TrainConfig& config, const DatasetManifest& manifest,
                         const std::filesystem::path& dir, const TrainOptions& options = {});

/// Trains on the human-labeled frames of the fold's train videos.
CheckpointMeta train_supervised(const DatasetManifest& manifest, const Fold& fold, const TrainConfig& config,
                                const std::filesystem::path& out_dir, const TrainOptions& options = {});

/// Stage 1 on pseudo and human frames (pseudo only with stage1_pseudo_only)
/// under stage1/, stage 2 fine-tunes the stage-1 best weights on human frames
/// with a fresh optimizer under stage2/. The stage-2 best is copied to
/// out_dir/best.ckpt.
CheckpointMeta train_semisupervised(const DatasetManifest& manifest, const Fold& fold, const TrainConfig& config,
                                    const std::filesystem::path& out_dir, const TrainOptions& options = {});

/// Dispatches on the variant's pseudo-data flag.
CheckpointMeta train_variant(const DatasetManifest& manifest, const Fold& fold, const TrainConfig& config,
                             const std::filesystem::path& out_dir, const TrainOptions& options = {});

class Predictor {
 public:
  explicit Predictor(const segnet::Checkpoint& ckpt);
  /// Throws fingerprint_mismatch when the checkpoint was built for another network.
  Predictor(const segnet::Checkpoint& ckpt, const segnet::NetworkConfig& expected);
  ~Predictor();
  Predictor(Predictor&&) noexcept;
  Predictor& operator=(Predictor&&) noexcept;

  /// Image must be at the checkpoint's working resolution.
  LabelMap predict(const Image& image, PhaseId phase);
  const segnet::NetworkConfig& config() const noexcept;
  segnet::UNet<float>& network() noexcept { return *net_; }

 private:
  std::unique_ptr<segnet::UNet<float>> net_;
};

LabelMap predict(const std::filesystem::path& checkpoint, const Image& image, PhaseId phase);

/// Scores a checkpoint on the human-labeled frames of `videos`, with phases
/// taken from the config's phase source.
ClassMetrics evaluate_checkpoint(const std::filesystem::path& checkpoint, const DatasetManifest& manifest,
                                 const std::vector<std::string>& videos, const TrainConfig& config);

}  // namespace phaseseg::trainer

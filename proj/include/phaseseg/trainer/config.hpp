#pragma once

#include "phaseseg/maskops/metrics.hpp"
#include "phaseseg/segnet/pcd.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace phaseseg::trainer {

enum class Variant { v0, v1, v2, v3, v4, v5, v6, v7 };
enum class PhaseSource { none, ground_truth, predicted_file };

std::string_view to_string(Variant v) noexcept;
Variant variant_from_string(std::string_view s);
std::string_view to_string(PhaseSource s) noexcept;
PhaseSource phase_source_from_string(std::string_view s);

/// One row of the ablation grid: conditioning mode, where phases come from,
/// and whether pseudo-labeled frames are used.
struct VariantSpec {
  Variant variant;
  segnet::PcdMode pcd_mode;
  PhaseSource phase_source;
  bool use_pseudo;

  friend bool operator==(const VariantSpec&, const VariantSpec&) = default;
};

const std::array<VariantSpec, 8>& variant_table();
const VariantSpec& variant_spec(Variant v);

struct TrainConfig {
  Variant variant = Variant::v0;
  double lr = 1e-4;
  double weight_decay = 1e-2;
  int batch_size = 16;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  /// Inverse-frequency class weights in the cross-entropy term.
  bool class_weights = false;
  int base_width = 32;
  int num_stages = 4;
  bool condition_bottleneck = false;
  Aggregation aggregation = Aggregation::per_frame;
  /// Semi-supervised stage 1 trains on pseudo frames alone instead of pseudo plus human.
  bool stage1_pseudo_only = false;
  /// Random horizontal flips and small rotations of training frames.
  bool augment = false;
  /// Directory of predicted phase tracks, relative to the manifest root unless absolute.
  std::string predicted_phase_dir = "predicted_phases";

  void validate() const;
  const VariantSpec& spec() const { return variant_spec(variant); }
};

nlohmann::json train_config_to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
/// FNV-1a of the canonical JSON form.
std::uint64_t train_config_fingerprint(const TrainConfig& c);

}  // namespace phaseseg::trainer

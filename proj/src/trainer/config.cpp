#include "phaseseg/trainer/config.hpp"

#include "phaseseg/error.hpp"
#include "phaseseg/rng.hpp"

namespace phaseseg::trainer {

using segnet::PcdMode;

namespace {

constexpr std::array<std::string_view, 8> kVariantNames{"v0", "v1", "v2", "v3", "v4", "v5", "v6", "v7"};

const std::array<VariantSpec, 8> kTable{{
    {Variant::v0, PcdMode::none, PhaseSource::none, false},
    {Variant::v1, PcdMode::none, PhaseSource::none, true},
    {Variant::v2, PcdMode::basic, PhaseSource::predicted_file, false},
    {Variant::v3, PcdMode::gated, PhaseSource::predicted_file, false},
    {Variant::v4, PcdMode::gated, PhaseSource::predicted_file, true},
    {Variant::v5, PcdMode::basic, PhaseSource::ground_truth, false},
    {Variant::v6, PcdMode::gated, PhaseSource::ground_truth, false},
    {Variant::v7, PcdMode::gated, PhaseSource::ground_truth, true},
}};

}  // namespace

std::string_view to_string(Variant v) noexcept { return kVariantNames[static_cast<std::size_t>(v)]; }

Variant variant_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kVariantNames.size(); ++i)
    if (kVariantNames[i] == s) return static_cast<Variant>(i);
  fail(ErrorKind::invalid_argument, "unknown variant '" + std::string(s) + "' (expected v0..v7)");
}

std::string_view to_string(PhaseSource s) noexcept {
  switch (s) {
    case PhaseSource::none: return "none";
    case PhaseSource::ground_truth: return "ground_truth";
    case PhaseSource::predicted_file: return "predicted_file";
  }
  return "none";
}

PhaseSource phase_source_from_string(std::string_view s) {
  if (s == "none") return PhaseSource::none;
  if (s == "ground_truth") return PhaseSource::ground_truth;
  if (s == "predicted_file") return PhaseSource::predicted_file;
  fail(ErrorKind::invalid_argument, "unknown phase source '" + std::string(s) + "'");
}

const std::array<VariantSpec, 8>& variant_table() { return kTable; }

const VariantSpec& variant_spec(Variant v) { return kTable[static_cast<std::size_t>(v)]; }

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::validation, msg);
  };
  need(lr > 0, "lr must be > 0");
  need(weight_decay >= 0, "weight_decay must be >= 0");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(max_epochs >= 1, "max_epochs must be >= 1");
  need(patience >= 1, "patience must be >= 1");
  need(patience <= max_epochs, "patience must not exceed max_epochs");
  need(base_width >= 1, "base_width must be >= 1");
  need(num_stages >= 1, "num_stages must be >= 1");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {
      {"variant", std::string(to_string(c.variant))},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"batch_size", c.batch_size},
      {"max_epochs", c.max_epochs},
      {"patience", c.patience},
      {"seed", c.seed},
      {"class_weights", c.class_weights},
      {"base_width", c.base_width},
      {"num_stages", c.num_stages},
      {"condition_bottleneck", c.condition_bottleneck},
      {"aggregation", std::string(to_string(c.aggregation))},
      {"stage1_pseudo_only", c.stage1_pseudo_only},
      {"augment", c.augment},
      {"predicted_phase_dir", c.predicted_phase_dir},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::parse, "train config must be a JSON object");
  TrainConfig c;
  const auto known = train_config_to_json(c);
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) fail(ErrorKind::validation, "unknown train config key '" + key + "'");
  try {
    if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.class_weights = j.value("class_weights", c.class_weights);
    c.base_width = j.value("base_width", c.base_width);
    c.num_stages = j.value("num_stages", c.num_stages);
    c.condition_bottleneck = j.value("condition_bottleneck", c.condition_bottleneck);
    if (j.contains("aggregation")) c.aggregation = aggregation_from_string(j["aggregation"].get<std::string>());
    c.stage1_pseudo_only = j.value("stage1_pseudo_only", c.stage1_pseudo_only);
    c.augment = j.value("augment", c.augment);
    c.predicted_phase_dir = j.value("predicted_phase_dir", c.predicted_phase_dir);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t train_config_fingerprint(const TrainConfig& c) { return fnv1a64(train_config_to_json(c).dump()); }

}  // namespace phaseseg::trainer

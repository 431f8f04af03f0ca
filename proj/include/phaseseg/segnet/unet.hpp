#pragma once

#include "phaseseg/core/manifest.hpp"
#include "phaseseg/core/raster.hpp"
#include "phaseseg/rng.hpp"
#include "phaseseg/segnet/layers.hpp"
#include "phaseseg/segnet/pcd.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace phaseseg::segnet {

struct NetworkConfig {
  int in_channels = 3;
  int num_classes = 2;  // tools + background
  int base_width = 32;
  int num_stages = 4;
  PcdMode pcd_mode = PcdMode::none;
  int num_phases = 0;  // real phases; the network adds one row for kNullPhase
  Resolution working_resolution{};
  bool condition_bottleneck = false;

  void validate() const;
  int width_at(int stage) const noexcept { return base_width << stage; }
  std::uint64_t fingerprint() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

nlohmann::json network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);

/// Two 3x3 convolutions, each followed by ReLU.
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const std::string& name, int in, int out);
  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, bool keep_cache);
  Tensor<T> backward(const Tensor<T>& dy, bool skip_input_grad = false);
  void collect(std::vector<Parameter<T>*>& out);

 private:
  Conv2d<T> a_;
  Conv2d<T> b_;
  Tensor<T> out_a_;
  Tensor<T> out_b_;
};

/// Per-sample phase conditioning of one decoder level.
template <typename T>
class PcdStage {
 public:
  PcdStage() = default;
  PcdStage(PcdMode mode, int level, PcdParams<T>* params) : mode_(mode), level_(level), params_(params) {}

  Tensor<T> forward(const Tensor<T>& f, std::span<const PhaseId> phases, bool keep_cache);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  PcdMode mode_ = PcdMode::none;
  int level_ = 0;
  PcdParams<T>* params_ = nullptr;
  Tensor<T> f_;
  Tensor<T> alpha_;
  std::vector<PhaseId> phases_;
};

/// Encoder-decoder with skip connections and optional phase conditioning at
/// every decoder level. Inputs are padded (reflect-101) to a multiple of
/// 2^num_stages and the scores cropped back.
template <typename T>
class UNet {
 public:
  explicit UNet(const NetworkConfig& cfg);
  UNet(const UNet&) = delete;
  UNet& operator=(const UNet&) = delete;

  void init(Rng& rng);

  /// x: N x in_channels x H x W; phases has N entries. Returns N x classes x H x W.
  Tensor<T> forward(const Tensor<T>& x, std::span<const PhaseId> phases, bool keep_cache = false);
  /// Accumulates gradients from dL/dscores of the last cached forward.
  void backward(const Tensor<T>& dscores);

  /// Deterministic order; names are unique.
  std::vector<Parameter<T>*> parameters();
  void zero_grad();
  std::size_t num_parameters();

  const NetworkConfig& config() const noexcept { return cfg_; }
  PcdParams<T>& pcd() noexcept { return pcd_; }

 private:
  NetworkConfig cfg_;
  std::vector<ConvBlock<T>> enc_;
  std::vector<MaxPool2<T>> pool_;
  ConvBlock<T> bottleneck_;
  std::vector<ConvTranspose2x2<T>> up_;  // up_[s]: stage s+1 -> s
  std::vector<ConvBlock<T>> dec_;
  PcdParams<T> pcd_;
  std::vector<PcdStage<T>> pcd_stage_;  // one per decoder level, plus bottleneck when enabled
  Conv2d<T> head_;
  int in_h_ = 0;
  int in_w_ = 0;
  int pad_h_ = 0;
  int pad_w_ = 0;
};

/// RGB image in [0,255] -> 1 x 3 x H x W tensor in [0,1].
template <typename T>
void image_to_tensor(const Image& img, Tensor<T>& out, int sample);

/// Per-pixel argmax over the class axis of sample i.
LabelMap argmax_labels(const Tensor<float>& scores, int sample);

}  // namespace phaseseg::segnet

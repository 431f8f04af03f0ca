#pragma once

#include "phaseseg/pseudolabel/segmenter.hpp"
#include "phaseseg/synth/world.hpp"

#include <cstdint>
#include <string_view>

namespace phaseseg::pseudo {

enum class Fidelity { perfect, dilated, jittered };

std::string_view to_string(Fidelity f) noexcept;
Fidelity fidelity_from_string(std::string_view s);

/// Test double for a foundation model, answering from the synthetic world's
/// ground truth at working resolution.
///
/// The object is the tool class under the majority of positive points
/// (ties to the lower id); with no positive point on a tool the mask is
/// empty. `dilated` grows the answer by `dilate_radius`, `jittered` flips
/// boundary pixels with a generator seeded from (seed, frame, class).
class OracleSegmenter final : public PromptableSegmenter {
 public:
  OracleSegmenter(const synth::World& world, Fidelity fidelity, std::uint64_t seed = 0, int dilate_radius = 2);

  BinaryMask segment_frame(const FrameRef& frame, std::span<const PointPrompt> points) override;
  std::vector<BinaryMask> propagate(const FrameRef& seed, std::span<const PointPrompt> points,
                                    const BinaryMask* seed_mask, std::span<const int> targets) override;
  bool concurrency_safe() const noexcept override { return true; }
  std::string describe() const override;

  /// The corrupted answer for a known object; exposed for tests.
  BinaryMask answer(const FrameRef& frame, ClassId class_id) const;

 private:
  ClassId pick_class(const LabelMap& labels, std::span<const PointPrompt> points) const;

  const synth::World& world_;
  Fidelity fidelity_;
  std::uint64_t seed_;
  int radius_;
};

/// Applies a fidelity corruption to an exact mask.
BinaryMask corrupt_mask(const BinaryMask& exact, Fidelity fidelity, std::uint64_t seed, int dilate_radius = 2);

}  // namespace phaseseg::pseudo

#pragma once

#include "phaseseg/maskops/binary_mask.hpp"
#include "phaseseg/pseudolabel/prompts.hpp"

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace phaseseg::pseudo {

/// A model that turns labeled point prompts into a mask and can carry an
/// object from a seed frame to other frames of the same video.
class PromptableSegmenter {
 public:
  virtual ~PromptableSegmenter() = default;

  virtual BinaryMask segment_frame(const FrameRef& frame, std::span<const PointPrompt> points) = 0;

  /// One mask per entry of `targets` (frame indices in the seed's video).
  /// When `seed_mask` is given it identifies the object instead of the points.
  virtual std::vector<BinaryMask> propagate(const FrameRef& seed, std::span<const PointPrompt> points,
                                            const BinaryMask* seed_mask, std::span<const int> targets) = 0;

  /// Whether calls may be issued from several threads at once.
  virtual bool concurrency_safe() const noexcept { return false; }
  virtual std::string describe() const = 0;
};

/// Memoises calls by (frame, points, seed mask, targets). Identical queries
/// during refinement hit the cache instead of the wrapped model.
class CachingSegmenter final : public PromptableSegmenter {
 public:
  explicit CachingSegmenter(PromptableSegmenter& inner) : inner_(inner) {}

  BinaryMask segment_frame(const FrameRef& frame, std::span<const PointPrompt> points) override;
  std::vector<BinaryMask> propagate(const FrameRef& seed, std::span<const PointPrompt> points,
                                    const BinaryMask* seed_mask, std::span<const int> targets) override;
  std::string describe() const override { return inner_.describe(); }

  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  PromptableSegmenter& inner_;
  std::map<std::string, BinaryMask> frames_;
  std::map<std::string, std::vector<BinaryMask>> propagations_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace phaseseg::pseudo

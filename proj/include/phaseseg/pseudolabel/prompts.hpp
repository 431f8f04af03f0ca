#pragma once

#include "phaseseg/core/taxonomy.hpp"
#include "phaseseg/maskops/binary_mask.hpp"

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace phaseseg::pseudo {

enum class PointLabel { negative = 0, positive = 1 };

struct PointPrompt {
  int x = 0;
  int y = 0;
  PointLabel label = PointLabel::positive;

  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

struct FrameRef {
  std::string video_id;
  int frame_index = 0;

  friend auto operator<=>(const FrameRef&, const FrameRef&) = default;
};

std::string to_string(const FrameRef& f);

struct PromptSet {
  FrameRef frame;
  ClassId class_id = 0;
  std::vector<PointPrompt> points;
  double score = 0.0;  // iou of the elicited mask against ground truth
};

/// Up to `count` distinct pixels drawn uniformly from the set bits of `region`.
std::vector<PointPrompt> sample_points(const BinaryMask& region, int count, PointLabel label, std::uint64_t seed);

/// Two positive points from the foreground and two negative points from the
/// background. Regions with fewer than two pixels contribute what they have.
PromptSet sample_initial_prompts(const BinaryMask& gt, std::uint64_t seed);

/// Target frames at anchor +- k * stride for k = 1..horizon/stride, clipped
/// to [0, video_length) and sorted.
std::vector<int> propagation_offsets(int anchor, int video_length, int stride = 30, int horizon = 90);

}  // namespace phaseseg::pseudo

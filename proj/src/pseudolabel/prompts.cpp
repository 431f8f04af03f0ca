#include "phaseseg/pseudolabel/prompts.hpp"

#include "phaseseg/error.hpp"
#include "phaseseg/rng.hpp"

#include <algorithm>

namespace phaseseg::pseudo {

std::string to_string(const FrameRef& f) { return f.video_id + " frame " + std::to_string(f.frame_index); }

std::vector<PointPrompt> sample_points(const BinaryMask& region, int count, PointLabel label, std::uint64_t seed) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < region.size(); ++i)
    if (region[i]) idx.push_back(i);
  const std::size_t take = std::min(idx.size(), static_cast<std::size_t>(std::max(count, 0)));
  Rng rng(seed);
  std::vector<PointPrompt> out;
  for (std::size_t k = 0; k < take; ++k) {
    const std::size_t j = k + rng.index(idx.size() - k);
    std::swap(idx[k], idx[j]);
    out.push_back({static_cast<int>(idx[k] % region.width()), static_cast<int>(idx[k] / region.width()), label});
  }
  return out;
}

PromptSet sample_initial_prompts(const BinaryMask& gt, std::uint64_t seed) {
  if (!gt.any()) fail(ErrorKind::invalid_argument, "cannot sample prompts from an empty ground-truth mask");
  BinaryMask bg(gt.height(), gt.width());
  for (std::size_t i = 0; i < gt.size(); ++i) bg.set_flat(i, !gt[i]);
  PromptSet s;
  s.points = sample_points(gt, 2, PointLabel::positive, derive_seed(seed, "prompt.fg"));
  auto neg = sample_points(bg, 2, PointLabel::negative, derive_seed(seed, "prompt.bg"));
  s.points.insert(s.points.end(), neg.begin(), neg.end());
  return s;
}

std::vector<int> propagation_offsets(int anchor, int video_length, int stride, int horizon) {
  if (stride < 1) fail(ErrorKind::invalid_argument, "stride must be >= 1");
  if (horizon < 0 || horizon % stride != 0) fail(ErrorKind::invalid_argument, "horizon must be a multiple of stride");
  if (anchor < 0 || anchor >= video_length) {
    fail(ErrorKind::invalid_argument, "anchor " + std::to_string(anchor) + " outside video of length " +
                                          std::to_string(video_length));
  }
  std::vector<int> out;
  for (int k = horizon / stride; k >= 1; --k)
    if (anchor - k * stride >= 0) out.push_back(anchor - k * stride);
  for (int k = 1; k <= horizon / stride; ++k)
    if (anchor + k * stride < video_length) out.push_back(anchor + k * stride);
  return out;
}

}  // namespace phaseseg::pseudo

#include "phaseseg/pseudolabel/segmenter.hpp"

#include "phaseseg/rng.hpp"

namespace phaseseg::pseudo {

namespace {

std::string key_of(const FrameRef& f, std::span<const PointPrompt> points) {
  std::string k = f.video_id + '#' + std::to_string(f.frame_index);
  for (const auto& p : points)
    k += ';' + std::to_string(p.x) + ',' + std::to_string(p.y) + ',' + (p.label == PointLabel::positive ? '+' : '-');
  return k;
}

std::string mask_digest(const BinaryMask& m) {
  std::string_view bytes(reinterpret_cast<const char*>(m.bits().data()), m.bits().size());
  return std::to_string(m.height()) + 'x' + std::to_string(m.width()) + ':' + std::to_string(fnv1a64(bytes));
}

}  // namespace

BinaryMask CachingSegmenter::segment_frame(const FrameRef& frame, std::span<const PointPrompt> points) {
  const std::string key = key_of(frame, points);
  if (auto it = frames_.find(key); it != frames_.end()) {
    ++hits_;
    return it->second;
  }
  ++misses_;
  return frames_.emplace(key, inner_.segment_frame(frame, points)).first->second;
}

std::vector<BinaryMask> CachingSegmenter::propagate(const FrameRef& seed, std::span<const PointPrompt> points,
                                                    const BinaryMask* seed_mask, std::span<const int> targets) {
  std::string key = key_of(seed, points) + '|' + (seed_mask ? mask_digest(*seed_mask) : std::string("-")) + '|';
  for (int t : targets) key += std::to_string(t) + ',';
  if (auto it = propagations_.find(key); it != propagations_.end()) {
    ++hits_;
    return it->second;
  }
  ++misses_;
  return propagations_.emplace(key, inner_.propagate(seed, points, seed_mask, targets)).first->second;
}

}  // namespace phaseseg::pseudo

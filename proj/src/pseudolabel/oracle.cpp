#include "phaseseg/pseudolabel/oracle.hpp"

#include "phaseseg/error.hpp"
#include "phaseseg/maskops/morphology.hpp"
#include "phaseseg/rng.hpp"

#include <map>

namespace phaseseg::pseudo {

std::string_view to_string(Fidelity f) noexcept {
  switch (f) {
    case Fidelity::perfect: return "perfect";
    case Fidelity::dilated: return "dilated";
    case Fidelity::jittered: return "jittered";
  }
  return "perfect";
}

Fidelity fidelity_from_string(std::string_view s) {
  if (s == "perfect") return Fidelity::perfect;
  if (s == "dilated") return Fidelity::dilated;
  if (s == "jittered") return Fidelity::jittered;
  fail(ErrorKind::invalid_argument, "unknown oracle fidelity '" + std::string(s) + "'");
}

BinaryMask corrupt_mask(const BinaryMask& exact, Fidelity fidelity, std::uint64_t seed, int dilate_radius) {
  switch (fidelity) {
    case Fidelity::perfect: return exact;
    case Fidelity::dilated: return dilate_radius > 0 ? dilate(exact, dilate_radius) : exact;
    case Fidelity::jittered: {
      // Pixels within one step of the boundary are redrawn as fair coin flips.
      const BinaryMask outer = dilate(exact, 1);
      const BinaryMask inner = erode(exact, 1);
      BinaryMask out = exact;
      Rng rng(seed);
      for (std::size_t i = 0; i < out.size(); ++i)
        if (outer[i] != inner[i]) out.set_flat(i, rng.next() & 1u);
      return out;
    }
  }
  return exact;
}

OracleSegmenter::OracleSegmenter(const synth::World& world, Fidelity fidelity, std::uint64_t seed, int dilate_radius)
    : world_(world), fidelity_(fidelity), seed_(seed), radius_(dilate_radius) {}

std::string OracleSegmenter::describe() const { return "oracle:" + std::string(to_string(fidelity_)); }

ClassId OracleSegmenter::pick_class(const LabelMap& labels, std::span<const PointPrompt> points) const {
  std::map<ClassId, int> votes;
  for (const auto& p : points) {
    if (p.label != PointLabel::positive) continue;
    if (p.x < 0 || p.y < 0 || p.x >= labels.width() || p.y >= labels.height()) {
      fail(ErrorKind::segmenter, "prompt point outside the frame");
    }
    const ClassId c = labels(p.y, p.x);
    if (c != 0) ++votes[c];
  }
  ClassId best = 0;
  int best_votes = 0;
  for (const auto& [c, n] : votes)
    if (n > best_votes) {
      best = c;
      best_votes = n;
    }
  return best;
}

BinaryMask OracleSegmenter::answer(const FrameRef& frame, ClassId class_id) const {
  const LabelMap labels = world_.labels(frame.video_id, frame.frame_index);
  const BinaryMask exact = BinaryMask::from_labels(labels, class_id);
  const std::uint64_t s =
      derive_seed(seed_, "oracle." + frame.video_id + "." + std::to_string(frame.frame_index) + "." +
                             std::to_string(class_id));
  return corrupt_mask(exact, fidelity_, s, radius_);
}

BinaryMask OracleSegmenter::segment_frame(const FrameRef& frame, std::span<const PointPrompt> points) {
  const LabelMap labels = world_.labels(frame.video_id, frame.frame_index);
  const ClassId c = pick_class(labels, points);
  if (c == 0) return BinaryMask(labels.height(), labels.width());
  return answer(frame, c);
}

std::vector<BinaryMask> OracleSegmenter::propagate(const FrameRef& seed, std::span<const PointPrompt> points,
                                                   const BinaryMask* seed_mask, std::span<const int> targets) {
  const LabelMap labels = world_.labels(seed.video_id, seed.frame_index);
  ClassId c = 0;
  if (seed_mask) {
    std::map<ClassId, std::size_t> votes;
    for (std::size_t i = 0; i < seed_mask->size(); ++i)
      if ((*seed_mask)[i] && labels.data()[i] != 0) ++votes[labels.data()[i]];
    std::size_t best = 0;
    for (const auto& [k, n] : votes)
      if (n > best) {
        best = n;
        c = k;
      }
  } else {
    c = pick_class(labels, points);
  }
  std::vector<BinaryMask> out;
  for (int t : targets) {
    if (c == 0) {
      out.emplace_back(labels.height(), labels.width());
      continue;
    }
    out.push_back(answer({seed.video_id, t}, c));
  }
  return out;
}

}  // namespace phaseseg::pseudo

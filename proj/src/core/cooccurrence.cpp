#include "phaseseg/core/cooccurrence.hpp"

#include "phaseseg/core/image_io.hpp"

namespace phaseseg {

void CooccurrenceMatrix::add_frame(PhaseId phase, const LabelMap& labels) {
  if (phase == kNullPhase || phase < 0 || phase >= num_phases) return;
  std::vector<bool> present(static_cast<std::size_t>(num_tools) + 1, false);
  for (std::uint8_t v : labels.data())
    if (v >= 1 && v <= num_tools) present[v] = true;
  for (int c = 1; c <= num_tools; ++c)
    if (present[static_cast<std::size_t>(c)]) at(phase, c) += 1.0;
}

void CooccurrenceMatrix::normalize_rows() {
  for (int p = 0; p < num_phases; ++p) {
    double sum = 0.0;
    for (int c = 1; c <= num_tools; ++c) sum += at(p, c);
    if (sum == 0.0) continue;
    for (int c = 1; c <= num_tools; ++c) at(p, c) /= sum;
  }
}

CooccurrenceMatrix cooccurrence_matrix(const DatasetManifest& manifest, CooccurrenceNorm norm) {
  CooccurrenceMatrix m(manifest.phases.num_phases(), manifest.tools.num_tools());
  for (const auto& frame : manifest.frames) {
    if (!frame.labeled() || frame.phase_id == kNullPhase) continue;
    m.add_frame(frame.phase_id, read_label_map(manifest.resolve(*frame.label_map_path)));
  }
  if (norm == CooccurrenceNorm::by_phase) m.normalize_rows();
  return m;
}

}  // namespace phaseseg

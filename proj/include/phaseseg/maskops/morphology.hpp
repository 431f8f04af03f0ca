#pragma once

#include "phaseseg/maskops/binary_mask.hpp"

namespace phaseseg {

enum class MorphOp { open, close };

/// Square structuring element of side 2*radius+1, clipped at the image border
/// (out-of-image pixels are ignored rather than padded).
BinaryMask erode(const BinaryMask& mask, int radius);
BinaryMask dilate(const BinaryMask& mask, int radius);

/// open = erode then dilate; close = dilate then erode. radius >= 1.
BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius);

}  // namespace phaseseg

#pragma once

#include "phaseseg/segnet/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace phaseseg::segnet {

template <typename T>
struct LossResult {
  T value = 0;  // ce + dice
  T ce = 0;
  T dice = 0;
  Tensor<T> grad;  // dL/dscores, same shape as scores
};

/// Cross-entropy plus soft-Dice averaged over tool classes 1..C.
///
/// `labels` holds N*H*W class ids laid out like the score planes. The CE term
/// is sum_i w[y_i] * -log p(y_i) / sum_i w[y_i] (w = 1 without class weights).
/// The Dice term is computed over the whole batch per class with smoothing 1.
template <typename T>
LossResult<T> segmentation_loss(const Tensor<T>& scores, std::span<const std::uint8_t> labels,
                                std::span<const double> class_weights = {}, bool want_grad = true);

/// Inverse-frequency weights normalised to mean 1 over the classes present;
/// absent classes get weight 0.
std::vector<double> inverse_frequency_weights(std::span<const std::uint64_t> pixel_counts);

/// Numerically stable softmax over the class axis.
template <typename T>
Tensor<T> softmax_classes(const Tensor<T>& scores);

}  // namespace phaseseg::segnet

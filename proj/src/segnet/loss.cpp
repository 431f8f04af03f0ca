#include "phaseseg/segnet/loss.hpp"

#include "phaseseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace phaseseg::segnet {

namespace {
constexpr double kDiceSmooth = 1.0;
}

template <typename T>
Tensor<T> softmax_classes(const Tensor<T>& scores) {
  Tensor<T> p(scores.n, scores.c, scores.h, scores.w);
  const std::size_t hw = scores.plane();
  for (int i = 0; i < scores.n; ++i) {
    const T* s = scores.sample(i);
    T* out = p.sample(i);
    for (std::size_t px = 0; px < hw; ++px) {
      T mx = s[px];
      for (int c = 1; c < scores.c; ++c) mx = std::max(mx, s[c * hw + px]);
      T sum = 0;
      for (int c = 0; c < scores.c; ++c) {
        const T e = std::exp(s[c * hw + px] - mx);
        out[c * hw + px] = e;
        sum += e;
      }
      for (int c = 0; c < scores.c; ++c) out[c * hw + px] /= sum;
    }
  }
  return p;
}

template <typename T>
LossResult<T> segmentation_loss(const Tensor<T>& scores, std::span<const std::uint8_t> labels,
                                std::span<const double> class_weights, bool want_grad) {
  const int C1 = scores.c;
  const std::size_t hw = scores.plane();
  if (labels.size() != static_cast<std::size_t>(scores.n) * hw) {
    fail(ErrorKind::shape_mismatch, "label count " + std::to_string(labels.size()) + " does not match scores");
  }
  if (!class_weights.empty() && static_cast<int>(class_weights.size()) != C1) {
    fail(ErrorKind::shape_mismatch, "class weight count must equal the number of classes");
  }
  for (std::uint8_t y : labels)
    if (y >= C1) fail(ErrorKind::invalid_argument, "label id " + std::to_string(y) + " outside [0, " +
                                                       std::to_string(C1 - 1) + "]");

  const Tensor<T> p = softmax_classes(scores);
  auto weight = [&](int y) { return class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y)]; };

  LossResult<T> r;
  double wsum = 0;
  double ce = 0;
  std::vector<double> inter(static_cast<std::size_t>(C1), 0.0);
  std::vector<double> psum(static_cast<std::size_t>(C1), 0.0);
  std::vector<double> gsum(static_cast<std::size_t>(C1), 0.0);
  for (int i = 0; i < scores.n; ++i) {
    const T* s = scores.sample(i);
    const T* pi = p.sample(i);
    for (std::size_t px = 0; px < hw; ++px) {
      const int y = labels[static_cast<std::size_t>(i) * hw + px];
      // log-softmax from the logits keeps -log p finite when p underflows.
      T mx = s[px];
      for (int c = 1; c < C1; ++c) mx = std::max(mx, s[c * hw + px]);
      double lse = 0;
      for (int c = 0; c < C1; ++c) lse += std::exp(static_cast<double>(s[c * hw + px] - mx));
      const double nll = std::log(lse) - static_cast<double>(s[y * hw + px] - mx);
      const double w = weight(y);
      ce += w * nll;
      wsum += w;
      for (int c = 1; c < C1; ++c) psum[c] += pi[c * hw + px];
      gsum[y] += 1.0;
      inter[y] += pi[y * hw + px];
    }
  }
  const double ce_val = wsum > 0 ? ce / wsum : 0.0;
  const int tools = C1 - 1;
  double dice = 0;
  for (int c = 1; c < C1; ++c)
    dice += 1.0 - (2.0 * inter[c] + kDiceSmooth) / (psum[c] + gsum[c] + kDiceSmooth);
  dice /= tools;
  r.ce = static_cast<T>(ce_val);
  r.dice = static_cast<T>(dice);
  r.value = static_cast<T>(ce_val + dice);
  if (!want_grad) return r;

  r.grad = Tensor<T>(scores.n, scores.c, scores.h, scores.w);
  std::vector<double> dp(static_cast<std::size_t>(C1));
  for (int i = 0; i < scores.n; ++i) {
    const T* pi = p.sample(i);
    T* gi = r.grad.sample(i);
    for (std::size_t px = 0; px < hw; ++px) {
      const int y = labels[static_cast<std::size_t>(i) * hw + px];
      // Dice part: dL/dp_c, then through the softmax Jacobian.
      double dot = 0;
      dp[0] = 0;
      for (int c = 1; c < C1; ++c) {
        const double den = psum[c] + gsum[c] + kDiceSmooth;
        const double num = 2.0 * inter[c] + kDiceSmooth;
        const double g = c == y ? 1.0 : 0.0;
        dp[c] = -(2.0 * g * den - num) / (den * den) / tools;
        dot += pi[c * hw + px] * dp[c];
      }
      const double wce = wsum > 0 ? weight(y) / wsum : 0.0;
      for (int c = 0; c < C1; ++c) {
        const double pc = pi[c * hw + px];
        const double d_dice = pc * (dp[c] - dot);
        const double d_ce = wce * (pc - (c == y ? 1.0 : 0.0));
        gi[c * hw + px] = static_cast<T>(d_dice + d_ce);
      }
    }
  }
  return r;
}

std::vector<double> inverse_frequency_weights(std::span<const std::uint64_t> pixel_counts) {
  std::vector<double> w(pixel_counts.size(), 0.0);
  double total = 0;
  int present = 0;
  for (auto c : pixel_counts) {
    total += static_cast<double>(c);
    present += c > 0;
  }
  if (present == 0) return std::vector<double>(pixel_counts.size(), 1.0);
  double sum = 0;
  for (std::size_t k = 0; k < w.size(); ++k)
    if (pixel_counts[k] > 0) {
      w[k] = total / static_cast<double>(pixel_counts[k]);
      sum += w[k];
    }
  for (auto& v : w) v *= present / sum;
  return w;
}

template LossResult<float> segmentation_loss<float>(const Tensor<float>&, std::span<const std::uint8_t>,
                                                    std::span<const double>, bool);
template LossResult<double> segmentation_loss<double>(const Tensor<double>&, std::span<const std::uint8_t>,
                                                      std::span<const double>, bool);
template Tensor<float> softmax_classes<float>(const Tensor<float>&);
template Tensor<double> softmax_classes<double>(const Tensor<double>&);

}  // namespace phaseseg::segnet

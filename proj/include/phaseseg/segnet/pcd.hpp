#pragma once

// Phase-conditioned decoder (PCD) operations.
//
// For a decoder feature map f (K x H x W) and phase p:
//   affine transform   f'  = gamma_p (.) f + beta_p          (channel-wise)
//   blend field        a   = sigmoid((H(f) + eta_p) / 2)     (1 x H x W)
//   gate               f'' = f' * a + f * (1 - a)
// H is a 1x1 convolution K -> 1 shared by all phases at a decoder level.
// "basic" mode applies only the affine transform; "gated" applies all three.

#include "phaseseg/core/taxonomy.hpp"
#include "phaseseg/error.hpp"
#include "phaseseg/segnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace phaseseg::segnet {

enum class PcdMode { none, basic, gated };

std::string_view to_string(PcdMode mode) noexcept;
PcdMode pcd_mode_from_string(std::string_view s);

template <typename T>
inline T sigmoid(T x) {
  return x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
}

/// Per-phase, per-level conditioning parameters. Level l has channel width
/// widths[l]; every level keeps one row per phase plus a final row for
/// kNullPhase. Rows start at the identity: gamma = 1, beta = 0, eta = 0.
template <typename T>
struct PhaseEmbeddingTable {
  int num_phases = 0;
  std::vector<int> widths;
  std::vector<Parameter<T>> gamma;  // [level] rows x K
  std::vector<Parameter<T>> beta;   // [level] rows x K
  std::vector<Parameter<T>> eta;    // [level] rows x 1

  static PhaseEmbeddingTable identity(int num_phases, std::vector<int> widths) {
    PhaseEmbeddingTable t;
    t.num_phases = num_phases;
    t.widths = std::move(widths);
    const int rows = num_phases + 1;
    for (std::size_t l = 0; l < t.widths.size(); ++l) {
      const std::string lvl = std::to_string(l);
      t.gamma.emplace_back("pcd.gamma." + lvl, std::vector<int>{rows, t.widths[l]}, T{1});
      t.beta.emplace_back("pcd.beta." + lvl, std::vector<int>{rows, t.widths[l]}, T{0});
      t.eta.emplace_back("pcd.eta." + lvl, std::vector<int>{rows, 1}, T{0});
    }
    return t;
  }

  int rows() const noexcept { return num_phases + 1; }
  int levels() const noexcept { return static_cast<int>(widths.size()); }

  /// Row index of a phase id; kNullPhase maps to the last row.
  int row(PhaseId p) const {
    if (p == kNullPhase) return num_phases;
    if (p < 0 || p >= num_phases) {
      fail(ErrorKind::invalid_argument, "phase id " + std::to_string(p) + " outside table of " +
                                            std::to_string(num_phases) + " phases");
    }
    return p;
  }

  std::span<const T> gamma_row(int level, PhaseId p) const {
    return {gamma[level].value.data() + static_cast<std::size_t>(row(p)) * widths[level],
            static_cast<std::size_t>(widths[level])};
  }
  std::span<const T> beta_row(int level, PhaseId p) const {
    return {beta[level].value.data() + static_cast<std::size_t>(row(p)) * widths[level],
            static_cast<std::size_t>(widths[level])};
  }
  T eta_value(int level, PhaseId p) const { return eta[level].value[static_cast<std::size_t>(row(p))]; }

  void check_level(int level, int channels) const {
    if (level < 0 || level >= levels()) {
      fail(ErrorKind::invalid_argument, "decoder level " + std::to_string(level) + " out of range");
    }
    if (widths[level] != channels) {
      fail(ErrorKind::shape_mismatch, "level " + std::to_string(level) + " expects " +
                                          std::to_string(widths[level]) + " channels, got " +
                                          std::to_string(channels));
    }
  }
};

/// The 1x1 convolution K -> 1 inside the blend-factor computation.
/// Zero-initialised, so the blend field starts at sigmoid(eta / 2).
template <typename T>
struct BlendConv {
  Parameter<T> weight;  // K
  Parameter<T> bias;    // 1

  static BlendConv zeros(int channels, const std::string& name) {
    return {Parameter<T>(name + ".weight", {channels}, T{0}), Parameter<T>(name + ".bias", {1}, T{0})};
  }
};

template <typename T>
struct PcdParams {
  PhaseEmbeddingTable<T> table;
  std::vector<BlendConv<T>> blend;  // one per level

  static PcdParams identity(int num_phases, const std::vector<int>& widths) {
    PcdParams p{PhaseEmbeddingTable<T>::identity(num_phases, widths), {}};
    for (std::size_t l = 0; l < widths.size(); ++l)
      p.blend.push_back(BlendConv<T>::zeros(widths[l], "pcd.blend." + std::to_string(l)));
    return p;
  }
};

namespace kernels {

// Raw single-sample kernels. `f` is K x HW contiguous; gradient outputs are
// accumulated (+=) so callers can sum over a batch.

template <typename T>
void paft_forward(const T* f, const T* gamma, const T* beta, int K, std::size_t hw, T* out) {
  for (int k = 0; k < K; ++k) {
    const T g = gamma[k];
    const T b = beta[k];
    const T* src = f + static_cast<std::size_t>(k) * hw;
    T* dst = out + static_cast<std::size_t>(k) * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] = g * src[i] + b;
  }
}

template <typename T>
void paft_backward(const T* f, const T* gamma, const T* dout, int K, std::size_t hw, T* df,
                   T* dgamma, T* dbeta) {
  for (int k = 0; k < K; ++k) {
    const T* src = f + static_cast<std::size_t>(k) * hw;
    const T* g = dout + static_cast<std::size_t>(k) * hw;
    T sg = 0;
    T sb = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      sg += g[i] * src[i];
      sb += g[i];
    }
    dgamma[k] += sg;
    dbeta[k] += sb;
    if (df) {
      T* d = df + static_cast<std::size_t>(k) * hw;
      const T gk = gamma[k];
      for (std::size_t i = 0; i < hw; ++i) d[i] += gk * g[i];
    }
  }
}

template <typename T>
void dfbf_forward(const T* f, const T* w, T bias, T eta, int K, std::size_t hw, T* alpha) {
  for (std::size_t i = 0; i < hw; ++i) alpha[i] = bias;
  for (int k = 0; k < K; ++k) {
    const T wk = w[k];
    if (wk == T{0}) continue;
    const T* src = f + static_cast<std::size_t>(k) * hw;
    for (std::size_t i = 0; i < hw; ++i) alpha[i] += wk * src[i];
  }
  // Rounding would otherwise reach exactly 0 or 1 for large |raw|.
  constexpr T lo = std::numeric_limits<T>::min();
  const T hi = std::nextafter(T{1}, T{0});
  for (std::size_t i = 0; i < hw; ++i) alpha[i] = std::clamp(sigmoid((alpha[i] + eta) / T{2}), lo, hi);
}

template <typename T>
void dfbf_backward(const T* f, const T* w, const T* alpha, const T* dalpha, int K, std::size_t hw,
                   T* df, T* dw, T* dbias, T* deta) {
  // d raw = dalpha * a (1 - a); raw = (conv + eta) / 2.
  Buffer<T> dconv(hw);
  T sum = 0;
  for (std::size_t i = 0; i < hw; ++i) {
    dconv[i] = dalpha[i] * alpha[i] * (T{1} - alpha[i]) / T{2};
    sum += dconv[i];
  }
  *dbias += sum;
  *deta += sum;
  for (int k = 0; k < K; ++k) {
    const T* src = f + static_cast<std::size_t>(k) * hw;
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += dconv[i] * src[i];
    dw[k] += acc;
    if (df) {
      T* d = df + static_cast<std::size_t>(k) * hw;
      const T wk = w[k];
      for (std::size_t i = 0; i < hw; ++i) d[i] += wk * dconv[i];
    }
  }
}

template <typename T>
void cgate_forward(const T* f, const T* fp, const T* alpha, int K, std::size_t hw, T* out) {
  for (int k = 0; k < K; ++k) {
    const std::size_t off = static_cast<std::size_t>(k) * hw;
    for (std::size_t i = 0; i < hw; ++i)
      out[off + i] = f[off + i] + alpha[i] * (fp[off + i] - f[off + i]);  // exact when fp == f
  }
}

template <typename T>
void cgate_backward(const T* f, const T* fp, const T* alpha, const T* dout, int K, std::size_t hw,
                    T* df, T* dfp, T* dalpha) {
  for (int k = 0; k < K; ++k) {
    const std::size_t off = static_cast<std::size_t>(k) * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      const T g = dout[off + i];
      if (df) df[off + i] += g * (T{1} - alpha[i]);
      if (dfp) dfp[off + i] += g * alpha[i];
      if (dalpha) dalpha[i] += g * (fp[off + i] - f[off + i]);
    }
  }
}

}  // namespace kernels

namespace detail {

template <typename T>
void require_single(const FeatureMap<T>& f, const char* op) {
  if (f.n != 1) fail(ErrorKind::shape_mismatch, std::string(op) + " expects a single feature map");
}

}  // namespace detail

/// f' = gamma_p (.) f + beta_p, broadcast over H x W.
template <typename T>
FeatureMap<T> paft_forward(const FeatureMap<T>& f, PhaseId phase, const PhaseEmbeddingTable<T>& table,
                           int level) {
  detail::require_single(f, "paft_forward");
  table.check_level(level, f.c);
  FeatureMap<T> out(1, f.c, f.h, f.w);
  kernels::paft_forward(f.data.data(), table.gamma_row(level, phase).data(),
                        table.beta_row(level, phase).data(), f.c, f.plane(), out.data.data());
  return out;
}

/// Blend field alpha = sigmoid((H(f) + eta_p) / 2), returned as 1 x 1 x H x W.
template <typename T>
FeatureMap<T> dfbf_alpha(const FeatureMap<T>& f, PhaseId phase, const PhaseEmbeddingTable<T>& table,
                         const BlendConv<T>& conv_h, int level) {
  detail::require_single(f, "dfbf_alpha");
  table.check_level(level, f.c);
  if (static_cast<int>(conv_h.weight.size()) != f.c) {
    fail(ErrorKind::shape_mismatch, "blend convolution expects " +
                                        std::to_string(conv_h.weight.size()) + " channels, got " +
                                        std::to_string(f.c));
  }
  FeatureMap<T> alpha(1, 1, f.h, f.w);
  kernels::dfbf_forward(f.data.data(), conv_h.weight.value.data(), conv_h.bias.value[0],
                        table.eta_value(level, phase), f.c, f.plane(), alpha.data.data());
  return alpha;
}

/// f'' = f' * alpha + f * (1 - alpha), alpha broadcast across channels.
template <typename T>
FeatureMap<T> cgate_fuse(const FeatureMap<T>& f, const FeatureMap<T>& f_prime, const FeatureMap<T>& alpha) {
  detail::require_single(f, "cgate_fuse");
  if (!f.same_shape(f_prime) || alpha.n != 1 || alpha.c != 1 || alpha.h != f.h || alpha.w != f.w) {
    fail(ErrorKind::shape_mismatch, "cgate_fuse: feature and blend shapes differ");
  }
  FeatureMap<T> out(1, f.c, f.h, f.w);
  kernels::cgate_forward(f.data.data(), f_prime.data.data(), alpha.data.data(), f.c, f.plane(),
                         out.data.data());
  return out;
}

/// none -> f; basic -> paft_forward(f); gated -> cgate_fuse(f, paft(f), dfbf(f)).
template <typename T>
FeatureMap<T> pcd_layer_forward(const FeatureMap<T>& f, PhaseId phase, PcdMode mode, int level,
                                const PcdParams<T>& params) {
  switch (mode) {
    case PcdMode::none: return f;
    case PcdMode::basic: return paft_forward(f, phase, params.table, level);
    case PcdMode::gated: {
      const FeatureMap<T> fp = paft_forward(f, phase, params.table, level);
      const FeatureMap<T> alpha = dfbf_alpha(f, phase, params.table, params.blend.at(level), level);
      return cgate_fuse(f, fp, alpha);
    }
  }
  return f;
}

}  // namespace phaseseg::segnet

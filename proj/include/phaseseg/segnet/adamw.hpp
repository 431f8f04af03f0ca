#pragma once

#include "phaseseg/segnet/tensor.hpp"

#include <cstdint>
#include <vector>

namespace phaseseg::segnet {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Adam with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
 public:
  AdamW(std::vector<Parameter<float>*> params, AdamWConfig cfg);

  void step();
  void zero_grad();
  /// Squared L2 norm of all gradients.
  double grad_norm_sq() const;

  std::int64_t steps() const noexcept { return t_; }
  const AdamWConfig& config() const noexcept { return cfg_; }

  /// Moment buffers, in parameter order, for checkpointing.
  std::vector<std::vector<float>>& first_moments() noexcept { return m_; }
  std::vector<std::vector<float>>& second_moments() noexcept { return v_; }
  const std::vector<std::vector<float>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<float>>& second_moments() const noexcept { return v_; }
  void set_steps(std::int64_t t) noexcept { t_ = t; }

 private:
  std::vector<Parameter<float>*> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::int64_t t_ = 0;
};

}  // namespace phaseseg::segnet

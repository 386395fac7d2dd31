#pragma once

#include <cstdint>
#include <vector>

#include "afford/tensor.hpp"

namespace afford {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over a fixed set of parameters. Moment
/// accumulators are allocated per parameter and match its shape; gradients
/// are read but never modified (callers zero them between steps).
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::vector<Parameter*> params, AdamConfig config);

  void step();

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamConfig config_;
  std::int64_t step_count_ = 0;
};

}  // namespace afford

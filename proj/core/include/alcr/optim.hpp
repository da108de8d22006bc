#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "alcr/tensor.hpp"

namespace alcr::autodiff {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter. A phase of training
/// owns one AdamState; step() counts completed updates.
struct AdamState {
  explicit AdamState(const ParameterStore& params);

  std::int64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

/// One Adam update with bias correction. Parameters without an entry in
/// `grads` are treated as having zero gradient.
void adam_step(ParameterStore& params, const Gradients& grads, AdamState& state,
               const AdamConfig& cfg);

/// Per-epoch decay: base_lr / divisor^epoch, epoch counted within the phase.
double lr_at_epoch(double base_lr, double divisor, int epoch);

}  // namespace alcr::autodiff

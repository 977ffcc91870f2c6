#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>

#include "rffi/tensornet/layers.hpp"

namespace rffi::tn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update using each parameter's accumulated
/// gradient. `step` is 1-based. Gradients are left untouched.
template <class T>
void adam_step(const ParameterRefs<T>& params, double learning_rate, std::size_t step, const AdamConfig& cfg = {});

template <class T>
void zero_grads(const ParameterRefs<T>& params);

struct SchedulerConfig {
  double factor = 0.2;
  int lr_patience = 5;
  int stop_patience = 10;
  double min_delta = 1e-4;
};

/// Optimiser bookkeeping across epochs. The learning-rate plateau counter
/// resets after each reduction; the early-stop counter only on improvement.
struct TrainState {
  std::size_t step = 0;
  double learning_rate = 1e-3;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  int plateau_wait = 0;
  bool stop = false;
};

TrainState scheduler_update(TrainState state, double val_loss, const SchedulerConfig& cfg = {});

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
  /// Probes retried with a smaller step because the original one crossed a
  /// ReLU or max-pool switch, and probes that crossed one at every step.
  std::size_t step_reductions = 0;
  std::size_t skipped = 0;
  bool passed(double tolerance) const { return max_relative_error < tolerance && skipped == 0; }
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Upper bound on entries probed per parameter tensor (0 = all). Entries
  /// are picked with a fixed stride so the probe set is deterministic.
  std::size_t max_entries_per_parameter = 0;
  /// Denominator floor, multiplied by max(1, |loss|), so near-zero gradients
  /// compare absolutely.
  double floor = 1e-6;
  /// A probe whose +-step crosses a ReLU or max-pool switch is retried with
  /// the step divided by 4, at most this many times.
  int max_step_reductions = 3;
};

/// Compares analytic gradients of the scalar `loss` against central finite
/// differences for every parameter. Probes are kept on the smooth piece of
/// the unperturbed forward pass (see BranchTrace).
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, const ParameterRefs<double>& params,
                           const GradCheckOptions& opts = {});

}  // namespace rffi::tn

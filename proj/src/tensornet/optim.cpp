#include "rffi/tensornet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "rffi/tensornet/ops.hpp"

namespace rffi::tn {

template <class T>
void adam_step(const ParameterRefs<T>& params, double learning_rate, std::size_t step, const AdamConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (Parameter<T>* p : params) {
    const auto g = p->tensor.grad();
    if (g.empty()) continue;
    auto w = p->tensor.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      p->adam_m[i] = b1 * p->adam_m[i] + (T(1) - b1) * g[i];
      p->adam_v[i] = b2 * p->adam_v[i] + (T(1) - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(p->adam_m[i]) / c1;
      const double v_hat = static_cast<double>(p->adam_v[i]) / c2;
      w[i] -= static_cast<T>(learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

template <class T>
void zero_grads(const ParameterRefs<T>& params) {
  for (Parameter<T>* p : params) p->tensor.zero_grad();
}

TrainState scheduler_update(TrainState state, double val_loss, const SchedulerConfig& cfg) {
  if (val_loss < state.best_val_loss - cfg.min_delta) {
    state.best_val_loss = val_loss;
    state.epochs_since_improvement = 0;
    state.plateau_wait = 0;
    return state;
  }
  ++state.epochs_since_improvement;
  ++state.plateau_wait;
  if (state.plateau_wait >= cfg.lr_patience) {
    state.learning_rate *= cfg.factor;
    state.plateau_wait = 0;
  }
  if (state.epochs_since_improvement >= cfg.stop_patience) state.stop = true;
  return state;
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, const ParameterRefs<double>& params,
                           const GradCheckOptions& opts) {
  zero_grads(params);
  BranchTrace trace;
  const Tensor<double> base = loss();
  const std::uint64_t base_branches = trace.digest();
  // Scaling the loss must not change the verdict, so the floor scales with it.
  const double floor = opts.floor * std::max(1.0, std::abs(base.item()));
  base.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter<double>* p : params) {
    const auto g = p->tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p->size(), 0.0);
  }

  // Loss at the perturbed point, or nullopt if it left the base branch pattern.
  auto probe_at = [&](double& w, double value) -> std::optional<double> {
    const double saved = w;
    w = value;
    trace.reset();
    const double f = loss().item();
    w = saved;
    if (trace.digest() != base_branches) return std::nullopt;
    return f;
  };

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = *params[pi];
    auto w = p.tensor.mutable_data();
    const std::size_t n = w.size();
    const std::size_t stride =
        opts.max_entries_per_parameter == 0 ? 1 : std::max<std::size_t>(1, n / opts.max_entries_per_parameter);
    for (std::size_t i = 0; i < n; i += stride) {
      ++report.checked;
      double h = opts.step;
      std::optional<double> numeric;
      for (int attempt = 0; attempt <= opts.max_step_reductions; ++attempt) {
        const auto up = probe_at(w[i], w[i] + h);
        const auto down = up ? probe_at(w[i], w[i] - h) : std::nullopt;
        if (up && down) {
          numeric = (*up - *down) / (2.0 * h);
          break;
        }
        if (attempt < opts.max_step_reductions) {
          ++report.step_reductions;
          h /= 4.0;
        }
      }
      if (!numeric) {
        ++report.skipped;
        continue;
      }
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(*numeric), floor});
      const double rel = std::abs(a - *numeric) / denom;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  zero_grads(params);
  return report;
}

template void adam_step<float>(const ParameterRefs<float>&, double, std::size_t, const AdamConfig&);
template void adam_step<double>(const ParameterRefs<double>&, double, std::size_t, const AdamConfig&);
template void zero_grads<float>(const ParameterRefs<float>&);
template void zero_grads<double>(const ParameterRefs<double>&);

}  // namespace rffi::tn

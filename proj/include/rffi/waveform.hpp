#pragma once

#include <cstddef>

#include "rffi/signal.hpp"

namespace rffi {

/// LoRa physical-layer settings that determine the preamble waveform.
/// Use LoRaConfig::make (or validate()) to enforce the invariants: sf in
/// [7, 12], integer oversampling, at least one preamble symbol.
struct LoRaConfig {
  int sf = 7;
  double bandwidth_hz = 125000.0;
  double sample_rate_hz = 250000.0;
  int n_preamble_symbols = 8;
  double amplitude = 1.0;

  static LoRaConfig make(int sf, double bandwidth_hz = 125000.0, double sample_rate_hz = 250000.0,
                         int n_preamble_symbols = 8, double amplitude = 1.0);
  void validate() const;

  std::size_t oversampling() const;
  /// 2^sf * oversampling.
  std::size_t samples_per_symbol() const;
};

/// T = 2^sf / B, in seconds.
double symbol_duration(const LoRaConfig& config);

std::size_t samples_per_preamble(const LoRaConfig& config);

/// n_preamble_symbols repetitions of the up-chirp A*exp(j(-pi*B*t + pi*(B/T)*t^2)),
/// t restarting at 0 at each symbol boundary and sampled at t_n = n/fs.
ComplexSignal synth_preamble(const LoRaConfig& config);

}  // namespace rffi

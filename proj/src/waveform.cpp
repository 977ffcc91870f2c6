#include "rffi/waveform.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rffi/errors.hpp"

namespace rffi {

LoRaConfig LoRaConfig::make(int sf, double bandwidth_hz, double sample_rate_hz, int n_preamble_symbols,
                            double amplitude) {
  LoRaConfig c{sf, bandwidth_hz, sample_rate_hz, n_preamble_symbols, amplitude};
  c.validate();
  return c;
}

void LoRaConfig::validate() const {
  if (sf < 7 || sf > 12) throw InvalidArgument("spreading factor must be in [7, 12], got " + std::to_string(sf));
  if (!(bandwidth_hz > 0.0)) throw InvalidArgument("bandwidth must be positive");
  if (sample_rate_hz < bandwidth_hz) throw InvalidArgument("sample rate must be at least the bandwidth");
  const double ratio = sample_rate_hz / bandwidth_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw InvalidArgument("sample rate must be an integer multiple of the bandwidth");
  }
  if (n_preamble_symbols < 1) throw InvalidArgument("preamble needs at least one symbol");
  if (!(amplitude > 0.0) || !std::isfinite(amplitude)) throw InvalidArgument("amplitude must be positive");
}

std::size_t LoRaConfig::oversampling() const {
  return static_cast<std::size_t>(std::llround(sample_rate_hz / bandwidth_hz));
}

std::size_t LoRaConfig::samples_per_symbol() const { return (std::size_t{1} << sf) * oversampling(); }

double symbol_duration(const LoRaConfig& config) {
  return std::ldexp(1.0, config.sf) / config.bandwidth_hz;
}

std::size_t samples_per_preamble(const LoRaConfig& config) {
  return static_cast<std::size_t>(config.n_preamble_symbols) * config.samples_per_symbol();
}

ComplexSignal synth_preamble(const LoRaConfig& config) {
  config.validate();
  const std::size_t per_symbol = config.samples_per_symbol();
  const double bw = config.bandwidth_hz;
  const double period = symbol_duration(config);
  const double ts = 1.0 / config.sample_rate_hz;

  std::vector<cplx> symbol(per_symbol);
  for (std::size_t n = 0; n < per_symbol; ++n) {
    const double t = static_cast<double>(n) * ts;
    const double phase = -std::numbers::pi * bw * t + std::numbers::pi * (bw / period) * t * t;
    symbol[n] = std::polar(config.amplitude, phase);
  }

  ComplexSignal out;
  out.sample_rate_hz = config.sample_rate_hz;
  out.samples.reserve(samples_per_preamble(config));
  for (int s = 0; s < config.n_preamble_symbols; ++s) {
    out.samples.insert(out.samples.end(), symbol.begin(), symbol.end());
  }
  return out;
}

}  // namespace rffi

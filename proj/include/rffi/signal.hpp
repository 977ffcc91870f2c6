#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace rffi {

using cplx = std::complex<double>;

/// Complex baseband samples plus their sample rate.
struct ComplexSignal {
  std::vector<cplx> samples;
  double sample_rate_hz = 0.0;

  std::size_t size() const noexcept { return samples.size(); }
  double sample_period() const noexcept { return 1.0 / sample_rate_hz; }
};

/// Throws InvalidArgument if the signal is empty, non-finite, or has a
/// non-positive sample rate.
void validate(const ComplexSignal& signal);

double rms(std::span<const cplx> samples);
inline double rms(const ComplexSignal& s) { return rms(s.samples); }

/// Rounds every component through float32, matching the on-disk precision.
void quantize_to_float(ComplexSignal& s);

}  // namespace rffi

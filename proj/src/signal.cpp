#include "rffi/signal.hpp"

#include <cmath>

#include "rffi/errors.hpp"

namespace rffi {

void validate(const ComplexSignal& signal) {
  if (signal.samples.empty()) throw InvalidArgument("signal has no samples");
  if (!(signal.sample_rate_hz > 0.0) || !std::isfinite(signal.sample_rate_hz)) {
    throw InvalidArgument("signal sample rate must be positive and finite");
  }
  for (const cplx& v : signal.samples) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw InvalidArgument("signal contains non-finite samples");
    }
  }
}

double rms(std::span<const cplx> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const cplx& v : samples) acc += std::norm(v);
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

void quantize_to_float(ComplexSignal& s) {
  for (cplx& v : s.samples) {
    v = {static_cast<double>(static_cast<float>(v.real())),
         static_cast<double>(static_cast<float>(v.imag()))};
  }
}

}  // namespace rffi

#pragma once

#include <optional>
#include <vector>

#include "json.hpp"
#include "rffi/random.hpp"
#include "rffi/signal.hpp"

namespace rffi {

/// Static FIR channel plus optional AWGN. An empty snr_db means noiseless.
struct ChannelSpec {
  std::vector<cplx> taps{cplx{1.0, 0.0}};
  std::optional<double> snr_db;

  void validate() const;
};

/// Linear convolution truncated to the input length (left-aligned).
ComplexSignal apply_multipath(const ComplexSignal& signal, const std::vector<cplx>& taps);

/// Noise RMS that realises snr_db against a signal of the given RMS.
double noise_rms_for(double signal_rms, double snr_db);

/// Adds circularly-symmetric complex Gaussian noise with
/// RMS = RMS(signal) / 10^(snr_db/20).
ComplexSignal add_awgn(const ComplexSignal& signal, double snr_db, RngStream& rng);

/// Multipath first, then AWGN measured against the convolved signal.
ComplexSignal apply_channel(const ComplexSignal& signal, const ChannelSpec& spec, RngStream& rng);

/// 20*log10(RMS(clean) / RMS(noisy - clean)).
double measured_snr_db(const ComplexSignal& clean, const ComplexSignal& noisy);

nlohmann::json to_json(const ChannelSpec& spec);
ChannelSpec channel_from_json(const nlohmann::json& j);

}  // namespace rffi

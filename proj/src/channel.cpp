#include "rffi/channel.hpp"

#include <cmath>

#include "rffi/errors.hpp"

namespace rffi {

void ChannelSpec::validate() const {
  if (taps.empty()) throw InvalidArgument("channel needs at least one tap");
  if (taps.front() == cplx{0.0, 0.0}) throw InvalidArgument("first channel tap must be nonzero");
  if (snr_db && !std::isfinite(*snr_db)) throw InvalidArgument("snr_db must be finite");
}

ComplexSignal apply_multipath(const ComplexSignal& signal, const std::vector<cplx>& taps) {
  validate(signal);
  if (taps.empty()) throw InvalidArgument("channel needs at least one tap");
  ComplexSignal out;
  out.sample_rate_hz = signal.sample_rate_hz;
  out.samples.assign(signal.size(), cplx{});
  const auto& x = signal.samples;
  for (std::size_t n = 0; n < x.size(); ++n) {
    cplx acc{};
    const std::size_t reach = std::min(taps.size(), n + 1);
    for (std::size_t k = 0; k < reach; ++k) acc += taps[k] * x[n - k];
    out.samples[n] = acc;
  }
  return out;
}

double noise_rms_for(double signal_rms, double snr_db) { return signal_rms / std::pow(10.0, snr_db / 20.0); }

ComplexSignal add_awgn(const ComplexSignal& signal, double snr_db, RngStream& rng) {
  if (!std::isfinite(snr_db)) throw InvalidArgument("snr_db must be finite");
  const double power = rms(signal);
  if (!(power > 0.0)) throw InvalidArgument("cannot calibrate noise against a zero-power signal");
  const double sigma = noise_rms_for(power, snr_db);
  const double variance = sigma * sigma;
  ComplexSignal out = signal;
  for (cplx& v : out.samples) v += rng.complex_normal(variance);
  return out;
}

ComplexSignal apply_channel(const ComplexSignal& signal, const ChannelSpec& spec, RngStream& rng) {
  spec.validate();
  ComplexSignal out = apply_multipath(signal, spec.taps);
  if (spec.snr_db) out = add_awgn(out, *spec.snr_db, rng);
  return out;
}

double measured_snr_db(const ComplexSignal& clean, const ComplexSignal& noisy) {
  if (clean.size() != noisy.size()) throw InvalidArgument("signals differ in length");
  double sig = 0.0;
  double noise = 0.0;
  for (std::size_t n = 0; n < clean.size(); ++n) {
    sig += std::norm(clean.samples[n]);
    noise += std::norm(noisy.samples[n] - clean.samples[n]);
  }
  return 10.0 * std::log10(sig / noise);
}

nlohmann::json to_json(const ChannelSpec& spec) {
  nlohmann::json taps = nlohmann::json::array();
  for (const cplx& t : spec.taps) taps.push_back({t.real(), t.imag()});
  nlohmann::json snr = spec.snr_db ? nlohmann::json(*spec.snr_db) : nlohmann::json("noiseless");
  return {{"taps", taps}, {"snr_db", snr}};
}

ChannelSpec channel_from_json(const nlohmann::json& j) {
  try {
    ChannelSpec spec;
    spec.taps.clear();
    for (const auto& t : j.at("taps")) spec.taps.emplace_back(t.at(0).get<double>(), t.at(1).get<double>());
    const auto& snr = j.at("snr_db");
    if (snr.is_string()) {
      if (snr.get<std::string>() != "noiseless") throw DataError("snr_db must be a number or \"noiseless\"");
    } else {
      spec.snr_db = snr.get<double>();
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed channel spec: ") + e.what());
  }
}

}  // namespace rffi

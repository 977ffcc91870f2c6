#include "rffi/impairment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "rffi/errors.hpp"

namespace rffi {

namespace {

constexpr double kPi = std::numbers::pi;

// Non-finite doubles do not survive JSON; infinity is written as null.
nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double read_number(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  return v.get<double>();
}

nlohmann::json range_json(const ParamRange& r) { return {number(r.low), number(r.high)}; }

ParamRange read_range(const nlohmann::json& j, const char* key, ParamRange fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) throw DataError(std::string("range '") + key + "' must be [low, high]");
  auto get = [](const nlohmann::json& x) {
    return x.is_null() ? std::numeric_limits<double>::infinity() : x.get<double>();
  };
  return {get(v[0]), get(v[1])};
}

double draw_in(const ParamRange& range, double centre, double jitter_width, RngStream& rng) {
  const double u = rng.uniform(-1.0, 1.0);
  if (range.degenerate()) return range.low;
  return std::clamp(centre + u * jitter_width, range.low, range.high);
}

}  // namespace

void DeviceProfile::validate() const {
  if (!(pa_saturation > 0.0)) throw InvalidArgument("pa_saturation must be positive");
  if (!(pa_smoothness > 0.0)) throw InvalidArgument("pa_smoothness must be positive");
  if (!(transient_tau_s >= 0.0)) throw InvalidArgument("transient_tau_s must be non-negative");
  if (!(phase_noise_linewidth_hz >= 0.0)) throw InvalidArgument("phase_noise_linewidth_hz must be non-negative");
}

DeviceProfile identity_profile(int device_id) {
  DeviceProfile p;
  p.device_id = device_id;
  p.pa_saturation = std::numeric_limits<double>::infinity();
  return p;
}

void PopulationSpec::validate() const {
  if (k_devices < 2) throw InvalidArgument("population needs at least two devices");
  if (n_groups < 1 || n_groups > k_devices) throw InvalidArgument("n_groups must be in [1, k_devices]");
  if (!(group_offset_scale > 0.0)) throw InvalidArgument("group_offset_scale must be positive");
  for (const ParamRange* r : {&cfo_hz, &iq_gain_imbalance_db, &iq_phase_imbalance_deg, &dc_offset_re, &dc_offset_im,
                              &pa_smoothness, &pa_saturation, &phase_noise_linewidth_hz, &transient_tau_s}) {
    if (r->low > r->high) throw InvalidArgument("parameter range has low > high");
  }
  if (!(pa_smoothness.low > 0.0) || !(pa_saturation.low > 0.0)) {
    throw InvalidArgument("amplifier parameters must be positive");
  }
  if (phase_noise_linewidth_hz.low < 0.0 || transient_tau_s.low < 0.0) {
    throw InvalidArgument("linewidth and transient ranges must be non-negative");
  }
}

int group_of(int device_id, int k_devices, int n_groups) {
  return static_cast<int>((static_cast<long long>(device_id) * n_groups) / k_devices);
}

std::vector<DeviceProfile> draw_profiles(const PopulationSpec& spec) {
  spec.validate();
  const ParamRange* ranges[] = {&spec.cfo_hz,          &spec.iq_gain_imbalance_db,     &spec.iq_phase_imbalance_deg,
                                &spec.dc_offset_re,    &spec.dc_offset_im,             &spec.pa_smoothness,
                                &spec.pa_saturation,   &spec.phase_noise_linewidth_hz, &spec.transient_tau_s};
  constexpr std::size_t kParams = std::size(ranges);

  // Group centres first, then devices; both from their own streams.
  std::vector<std::array<double, kParams>> centres(static_cast<std::size_t>(spec.n_groups));
  for (int g = 0; g < spec.n_groups; ++g) {
    RngStream rng(derive_seed(spec.seed, {0x67726f7570ULL, static_cast<std::uint64_t>(g)}));
    for (std::size_t p = 0; p < kParams; ++p) {
      const ParamRange& r = *ranges[p];
      const double u = rng.uniform();
      centres[static_cast<std::size_t>(g)][p] = r.degenerate() ? r.low : r.low + (r.high - r.low) * u;
    }
  }

  std::vector<DeviceProfile> out;
  out.reserve(static_cast<std::size_t>(spec.k_devices));
  for (int i = 0; i < spec.k_devices; ++i) {
    const int g = group_of(i, spec.k_devices, spec.n_groups);
    RngStream rng(derive_seed(spec.seed, {0x646576696365ULL, static_cast<std::uint64_t>(i)}));
    std::array<double, kParams> v{};
    for (std::size_t p = 0; p < kParams; ++p) {
      const ParamRange& r = *ranges[p];
      const double width = r.degenerate() ? 0.0 : (r.high - r.low) / spec.group_offset_scale;
      v[p] = draw_in(r, centres[static_cast<std::size_t>(g)][p], width, rng);
    }
    DeviceProfile d;
    d.device_id = i;
    d.cfo_hz = v[0];
    d.iq_gain_imbalance_db = v[1];
    d.iq_phase_imbalance_deg = v[2];
    d.dc_offset = {v[3], v[4]};
    d.pa_smoothness = v[5];
    d.pa_saturation = v[6];
    d.phase_noise_linewidth_hz = v[7];
    d.transient_tau_s = v[8];
    d.manufacturer_group = g;
    out.push_back(d);
  }
  return out;
}

double rapp_gain(double amplitude, double saturation, double smoothness) {
  if (!std::isfinite(saturation)) return amplitude;
  const double two_p = 2.0 * smoothness;
  const double ratio = amplitude / saturation;
  // Evaluate in log space so large p does not overflow.
  const double log_term = two_p * std::log(ratio);
  double denom_log;
  if (log_term > 40.0) {
    denom_log = log_term / two_p;  // (1 + r^2p)^(1/2p) -> r
  } else {
    denom_log = std::log1p(std::exp(log_term)) / two_p;
  }
  return amplitude * std::exp(-denom_log);
}

ComplexSignal apply_impairments(const ComplexSignal& signal, const DeviceProfile& profile, RngStream& rng,
                                bool first_symbol_marked, std::size_t symbol_samples) {
  validate(signal);
  profile.validate();
  const double ts = signal.sample_period();
  ComplexSignal out = signal;
  auto& y = out.samples;

  if (first_symbol_marked && profile.transient_tau_s > 0.0) {
    const std::size_t span = std::min(symbol_samples, y.size());
    for (std::size_t n = 0; n < span; ++n) {
      const double t = static_cast<double>(n) * ts;
      y[n] *= 1.0 - std::exp(-t / profile.transient_tau_s);
    }
  }

  if (profile.iq_gain_imbalance_db != 0.0 || profile.iq_phase_imbalance_deg != 0.0) {
    const double g = std::pow(10.0, profile.iq_gain_imbalance_db / 20.0);
    const double phi = profile.iq_phase_imbalance_deg * kPi / 180.0;
    const double s = std::sin(phi);
    const double c = std::cos(phi);
    for (cplx& v : y) {
      const double i = v.real();
      const double q = v.imag();
      v = {i, g * (c * q - s * i)};
    }
  }

  if (profile.dc_offset != cplx{0.0, 0.0}) {
    for (cplx& v : y) v += profile.dc_offset;
  }

  if (std::isfinite(profile.pa_saturation)) {
    for (cplx& v : y) {
      const double a = std::abs(v);
      if (a > 0.0) v *= rapp_gain(a, profile.pa_saturation, profile.pa_smoothness) / a;
    }
  }

  if (profile.phase_noise_linewidth_hz > 0.0) {
    const double sigma = std::sqrt(2.0 * kPi * profile.phase_noise_linewidth_hz * ts);
    double phase = 0.0;
    for (std::size_t n = 0; n < y.size(); ++n) {
      if (n > 0) phase += sigma * rng.normal();
      y[n] *= std::polar(1.0, phase);
    }
  }

  if (profile.cfo_hz != 0.0) {
    const double w = 2.0 * kPi * profile.cfo_hz * ts;
    for (std::size_t n = 0; n < y.size(); ++n) y[n] *= std::polar(1.0, w * static_cast<double>(n));
  }
  return out;
}

nlohmann::json to_json(const DeviceProfile& p) {
  return {{"device_id", p.device_id},
          {"cfo_hz", p.cfo_hz},
          {"iq_gain_imbalance_db", p.iq_gain_imbalance_db},
          {"iq_phase_imbalance_deg", p.iq_phase_imbalance_deg},
          {"dc_offset", {p.dc_offset.real(), p.dc_offset.imag()}},
          {"pa_smoothness", p.pa_smoothness},
          {"pa_saturation", number(p.pa_saturation)},
          {"phase_noise_linewidth_hz", p.phase_noise_linewidth_hz},
          {"transient_tau_s", p.transient_tau_s},
          {"manufacturer_group", p.manufacturer_group}};
}

DeviceProfile profile_from_json(const nlohmann::json& j) {
  try {
    DeviceProfile p;
    p.device_id = j.at("device_id").get<int>();
    p.cfo_hz = j.at("cfo_hz").get<double>();
    p.iq_gain_imbalance_db = j.at("iq_gain_imbalance_db").get<double>();
    p.iq_phase_imbalance_deg = j.at("iq_phase_imbalance_deg").get<double>();
    const auto& dc = j.at("dc_offset");
    p.dc_offset = {dc.at(0).get<double>(), dc.at(1).get<double>()};
    p.pa_smoothness = j.at("pa_smoothness").get<double>();
    p.pa_saturation = read_number(j, "pa_saturation", p.pa_saturation);
    p.phase_noise_linewidth_hz = j.at("phase_noise_linewidth_hz").get<double>();
    p.transient_tau_s = j.at("transient_tau_s").get<double>();
    p.manufacturer_group = j.value("manufacturer_group", 0);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed device profile: ") + e.what());
  }
}

nlohmann::json to_json(const PopulationSpec& s) {
  return {{"k_devices", s.k_devices},
          {"cfo_hz", range_json(s.cfo_hz)},
          {"iq_gain_imbalance_db", range_json(s.iq_gain_imbalance_db)},
          {"iq_phase_imbalance_deg", range_json(s.iq_phase_imbalance_deg)},
          {"dc_offset_re", range_json(s.dc_offset_re)},
          {"dc_offset_im", range_json(s.dc_offset_im)},
          {"pa_smoothness", range_json(s.pa_smoothness)},
          {"pa_saturation", range_json(s.pa_saturation)},
          {"phase_noise_linewidth_hz", range_json(s.phase_noise_linewidth_hz)},
          {"transient_tau_s", range_json(s.transient_tau_s)},
          {"n_groups", s.n_groups},
          {"group_offset_scale", s.group_offset_scale},
          {"seed", s.seed}};
}

PopulationSpec population_from_json(const nlohmann::json& j) {
  try {
    PopulationSpec s;
    s.k_devices = j.value("k_devices", s.k_devices);
    s.cfo_hz = read_range(j, "cfo_hz", s.cfo_hz);
    s.iq_gain_imbalance_db = read_range(j, "iq_gain_imbalance_db", s.iq_gain_imbalance_db);
    s.iq_phase_imbalance_deg = read_range(j, "iq_phase_imbalance_deg", s.iq_phase_imbalance_deg);
    s.dc_offset_re = read_range(j, "dc_offset_re", s.dc_offset_re);
    s.dc_offset_im = read_range(j, "dc_offset_im", s.dc_offset_im);
    s.pa_smoothness = read_range(j, "pa_smoothness", s.pa_smoothness);
    s.pa_saturation = read_range(j, "pa_saturation", s.pa_saturation);
    s.phase_noise_linewidth_hz = read_range(j, "phase_noise_linewidth_hz", s.phase_noise_linewidth_hz);
    s.transient_tau_s = read_range(j, "transient_tau_s", s.transient_tau_s);
    s.n_groups = j.value("n_groups", s.n_groups);
    s.group_offset_scale = j.value("group_offset_scale", s.group_offset_scale);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed population spec: ") + e.what());
  }
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t profile_hash(const DeviceProfile& p) {
  const std::string text = to_json(p).dump();
  return fnv1a64(text.data(), text.size());
}

}  // namespace rffi

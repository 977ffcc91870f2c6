#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "rffi/random.hpp"
#include "rffi/signal.hpp"

namespace rffi {

/// Hardware distortion parameters of one transmitter.
struct DeviceProfile {
  int device_id = 0;
  double cfo_hz = 0.0;
  double iq_gain_imbalance_db = 0.0;
  double iq_phase_imbalance_deg = 0.0;
  cplx dc_offset{0.0, 0.0};
  double pa_smoothness = 2.0;
  /// Rapp input saturation amplitude; +infinity disables the amplifier model.
  double pa_saturation = std::numeric_limits<double>::infinity();
  double phase_noise_linewidth_hz = 0.0;
  /// Power-on ramp time constant; 0 disables the transient.
  double transient_tau_s = 0.0;
  int manufacturer_group = 0;

  void validate() const;
  bool operator==(const DeviceProfile&) const = default;
};

/// Profile with every impairment at its identity value.
DeviceProfile identity_profile(int device_id = 0);

struct ParamRange {
  double low = 0.0;
  double high = 0.0;
  bool degenerate() const noexcept { return low == high; }
  bool operator==(const ParamRange&) const = default;
};

/// Recipe for a reproducible device population.
struct PopulationSpec {
  int k_devices = 10;
  ParamRange cfo_hz{-250.0, 250.0};
  ParamRange iq_gain_imbalance_db{-3.0, 3.0};
  ParamRange iq_phase_imbalance_deg{-15.0, 15.0};
  ParamRange dc_offset_re{-0.15, 0.15};
  ParamRange dc_offset_im{-0.15, 0.15};
  ParamRange pa_smoothness{1.0, 3.0};
  ParamRange pa_saturation{0.8, 1.5};
  ParamRange phase_noise_linewidth_hz{1.0, 10.0};
  ParamRange transient_tau_s{20e-6, 150e-6};
  int n_groups = 2;
  /// Larger values pull devices closer to their group centre: per-device
  /// jitter spans (high - low) / group_offset_scale.
  double group_offset_scale = 1.5;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const PopulationSpec&) const = default;
};

/// Contiguous group assignment: device i belongs to floor(i * n_groups / K).
int group_of(int device_id, int k_devices, int n_groups);

std::vector<DeviceProfile> draw_profiles(const PopulationSpec& spec);

/// Applies, in order: power-on ramp over the first symbol (when
/// first_symbol_marked and transient_tau_s > 0), IQ gain/phase imbalance,
/// DC offset, Rapp amplifier compression, phase-noise random walk, CFO.
ComplexSignal apply_impairments(const ComplexSignal& signal, const DeviceProfile& profile, RngStream& rng,
                                bool first_symbol_marked, std::size_t symbol_samples);

/// Rapp AM/AM characteristic g(a) = a / (1 + (a/sat)^(2p))^(1/(2p)).
double rapp_gain(double amplitude, double saturation, double smoothness);

nlohmann::json to_json(const DeviceProfile& p);
DeviceProfile profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PopulationSpec& s);
PopulationSpec population_from_json(const nlohmann::json& j);

/// FNV-1a hash of the canonical JSON form.
std::uint64_t profile_hash(const DeviceProfile& p);
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace rffi

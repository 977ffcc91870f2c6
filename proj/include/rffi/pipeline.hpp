#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rffi/dsp.hpp"
#include "rffi/impairment.hpp"
#include "rffi/models.hpp"
#include "rffi/tensornet/optim.hpp"
#include "rffi/waveform.hpp"

namespace rffi {

struct DatasetRecord {
  ComplexSignal iq;
  int label = 0;
  int sf = 7;
  /// Position of the packet within its (device, sf) run.
  std::uint32_t packet_index = 0;
  std::uint64_t profile_hash = 0;
  /// SNR of noise already baked into iq; NaN for noiseless records.
  double snr_db = std::numeric_limits<double>::quiet_NaN();

  bool noiseless() const { return std::isnan(snr_db); }
};

struct OfflineAugmentation {
  int copies = 1;
  ParamRange snr_db{0.0, 40.0};
  std::uint64_t seed = 0;
  std::string source_hash;
};

/// Records are ordered device-major, then by sf, then packet index (copies of
/// one packet are adjacent after offline augmentation).
struct Dataset {
  PopulationSpec population;
  std::vector<DeviceProfile> profiles;
  std::vector<int> sfs;
  std::size_t n_per_device_per_sf = 0;
  std::uint64_t seed = 0;
  std::optional<OfflineAugmentation> augmentation;
  std::vector<DatasetRecord> records;

  std::size_t size() const { return records.size(); }
  int k_devices() const { return population.k_devices; }
};

Dataset generate_dataset(const PopulationSpec& population, const std::vector<int>& sfs,
                         std::size_t n_per_device_per_sf, std::uint64_t seed);

/// Manifest JSON including a checksum of every record file's bytes.
nlohmann::json dataset_manifest(const Dataset& dataset);
/// FNV-1a of the serialized manifest.
std::uint64_t manifest_hash(const Dataset& dataset);

/// Directory layout: manifest.json plus one little-endian float32 interleaved
/// I/Q file per (device, sf).
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

Dataset augment_offline(const Dataset& dataset, ParamRange snr_db, int copies, std::uint64_t seed);

/// Records restricted to one spreading factor.
Dataset filter_sf(const Dataset& dataset, int sf);

enum class Augmentation { None, Offline, Online };
std::string_view to_string(Augmentation a);
Augmentation augmentation_from_string(std::string_view s);

struct EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainConfig {
  Augmentation augmentation = Augmentation::Online;
  int offline_copies = 1;
  double snr_low_db = 0.0;
  double snr_high_db = 40.0;
  std::size_t batch_size = 32;
  double lr0 = 1e-3;
  double val_fraction = 0.1;
  tn::SchedulerConfig scheduler;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  /// Slicing models only: train on this slice position instead of all slices.
  std::optional<std::size_t> slice_position;
  std::function<void(const EpochStats&)> on_epoch;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainResult {
  std::vector<EpochStats> history;
  /// Noise realizations drawn by online augmentation.
  std::size_t online_noise_draws = 0;
};

/// Trains in place and leaves the best-validation parameters in `model`.
TrainResult train(TrainedModel& model, const Dataset& dataset, const TrainConfig& cfg);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);
std::string history_csv(const std::vector<EpochStats>& history);

/// CFO compensation, RMS normalisation and spectrogram conversion. Slicing
/// models get one spectrogram per 256-sample slice; `slice_position` keeps
/// only that slice.
std::vector<Spectrogram> model_inputs(const ModelSpec& spec, const ComplexSignal& iq, const LoRaConfig& config,
                                      std::optional<std::size_t> slice_position = std::nullopt);

/// LoRa settings implied by a preamble length at the default bandwidth and
/// sample rate.
LoRaConfig config_for_length(std::size_t n_samples);

ProbVector infer_single(const TrainedModel& model, const ComplexSignal& iq, const LoRaConfig& config);
ProbVector infer_single(const TrainedModel& model, const ComplexSignal& iq);

/// Element-wise mean of equally sized probability vectors.
ProbVector mean_prob(const std::vector<ProbVector>& vectors);

/// Recent predictions of one stream; holds at most n_pkt - 1 vectors.
class InferenceHistory {
 public:
  explicit InferenceHistory(std::size_t n_pkt = 1);
  std::size_t n_pkt() const noexcept { return n_pkt_; }
  const std::deque<ProbVector>& entries() const noexcept { return entries_; }
  void push(const ProbVector& p);

 private:
  std::size_t n_pkt_;
  std::deque<ProbVector> entries_;
};

struct Fusion {
  std::size_t label = 0;
  ProbVector probabilities;
};

/// Averages `incoming` with the stored vectors, then records it.
Fusion fuse_multi_packet(InferenceHistory& history, const ProbVector& incoming);

}  // namespace rffi

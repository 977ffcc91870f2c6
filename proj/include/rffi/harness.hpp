#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rffi/pipeline.hpp"

namespace rffi {

enum class ExperimentKind { SnrSweep, AugCompare, MultiPacketCurve, SlicingCompare, PositionStudy, Complexity };
std::string_view to_string(ExperimentKind k);
ExperimentKind experiment_from_string(std::string_view s);

struct ExperimentSpec {
  ExperimentKind experiment = ExperimentKind::SnrSweep;
  std::vector<Architecture> architectures{Architecture::FlattenFreeCnn};
  std::vector<double> test_snrs_db{0, 5, 10, 15, 20, 25, 30, 35, 40};
  std::vector<std::size_t> n_pkt_list{1, 2, 3, 5, 10, 20};
  std::string output_dir;

  PopulationSpec population;
  std::vector<int> sfs{7, 8, 9};
  std::size_t train_per_device = 500;
  std::size_t test_per_device = 100;
  std::uint64_t seed = 1;
  Scale scale = Scale::Desk;
  /// Template for every training arm; its seed is replaced by one derived
  /// from `seed` so all arms share it.
  TrainConfig train;
  /// Embed each test packet in a longer noisy buffer and locate it with
  /// detect_and_sync; missed detections count as errors.
  bool realistic_sync = false;
  std::size_t complexity_runs = 100;
  /// Where trained models are cached as <key>.ckpt. With
  /// require_checkpoints set, a missing file is an error instead of
  /// triggering training.
  std::string checkpoint_dir;
  bool require_checkpoints = false;

  void validate() const;
};

nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);

struct ReportRow {
  std::string architecture;
  /// Training variant: augmentation arm or slice position label.
  std::string arm;
  int sf = 7;
  double snr_db = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_pkt = 1;
  int train_position = -1;
  int test_position = -1;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  std::size_t param_count = 0;
  double inference_ms = std::numeric_limits<double>::quiet_NaN();
  /// K x K counts, rows are true devices; empty for complexity rows.
  std::vector<std::vector<std::size_t>> confusion;
  /// Per-device packets lost to failed synchronisation.
  std::vector<std::size_t> missed;
};

struct Report {
  ExperimentKind kind = ExperimentKind::SnrSweep;
  int k_devices = 0;
  std::vector<ReportRow> rows;
  /// Full spec, seeds, dataset manifest hashes, training histories and
  /// wall-clock timings.
  nlohmann::json metadata = nlohmann::json::object();

  /// Rows of one architecture, optionally restricted to one arm.
  std::vector<const ReportRow*> select(std::string_view architecture, std::string_view arm = {}) const;
};

nlohmann::json to_json(const Report& r);
Report report_from_json(const nlohmann::json& j);
Report load_report(const std::string& path);

struct TrainedArm {
  std::shared_ptr<const TrainedModel> model;
  /// Empty when the model came from a checkpoint.
  std::vector<EpochStats> history;
};

/// Reuses datasets and trained models across experiments in one process.
/// Entries are keyed by everything that determines their content, so a hit
/// returns exactly what a fresh run would produce.
class ExperimentCache {
 public:
  std::shared_ptr<const Dataset> dataset(const std::string& key) const;
  void put_dataset(const std::string& key, std::shared_ptr<const Dataset> d);
  const TrainedArm* model(const std::string& key) const;
  void put_model(const std::string& key, TrainedArm arm);

 private:
  std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
  std::map<std::string, TrainedArm> models_;
};

Report run_snr_sweep(const ExperimentSpec& spec, ExperimentCache* cache = nullptr);
Report run_aug_compare(const ExperimentSpec& spec, ExperimentCache* cache = nullptr);
Report run_multipacket_curve(const ExperimentSpec& spec, ExperimentCache* cache = nullptr);
Report run_slicing_compare(const ExperimentSpec& spec, ExperimentCache* cache = nullptr);
Report run_position_study(const ExperimentSpec& spec, ExperimentCache* cache = nullptr);
Report run_complexity(const ExperimentSpec& spec, ExperimentCache* cache = nullptr);
Report run_experiment(const ExperimentSpec& spec, ExperimentCache* cache = nullptr);

/// Per-record probability vectors for a test set at one SNR. Noise draws
/// depend on the record, SNR and seed only, so every model sees the same
/// noisy packets. Missed detections (realistic sync) yield an empty vector.
std::vector<ProbVector> evaluate_records(const TrainedModel& model, const Dataset& test, double snr_db,
                                         std::uint64_t seed, bool realistic_sync = false,
                                         std::optional<std::size_t> slice_position = std::nullopt);

/// Fuses consecutive packets of each device in blocks of n_pkt and scores
/// the block decisions. Records must be ordered per device.
ReportRow score_blocks(const Dataset& test, const std::vector<ProbVector>& probs, std::size_t n_pkt);

/// Writes the requested formats ("csv", "json", "svg") into `dir` and returns
/// the paths written.
std::vector<std::string> emit_report(const Report& report, const std::string& dir,
                                     const std::vector<std::string>& formats);
std::string report_csv(const Report& report);
/// Named SVG documents for the report.
std::vector<std::pair<std::string, std::string>> report_svgs(const Report& report);

}  // namespace rffi

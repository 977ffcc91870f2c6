#include "rffi/harness.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rffi/channel.hpp"
#include "rffi/errors.hpp"
#include "rffi/random.hpp"

namespace rffi {

namespace {

namespace fs = std::filesystem;

enum : std::uint64_t {
  kTagTrainSet = 0x7473,
  kTagTestSet = 0x6573,
  kTagInit = 0x696e,
  kTagTrainCfg = 0x7463,
  kTagEval = 0x6576,
  kTagTiming = 0x746d,
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string key_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  return hex64(fnv1a64(s.data(), s.size()));
}

std::uint64_t arch_index(Architecture a) { return static_cast<std::uint64_t>(a); }

nlohmann::json history_json(const std::vector<EpochStats>& h) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : h) {
    out.push_back({{"epoch", e.epoch},
                   {"lr", e.learning_rate},
                   {"train_loss", e.train_loss},
                   {"val_loss", e.val_loss},
                   {"val_acc", e.val_accuracy}});
  }
  return out;
}

// Shared state of one experiment run.
class Session {
 public:
  Session(const ExperimentSpec& spec, ExperimentCache* cache) : spec_(spec), cache_(cache), t0_(Clock::now()) {
    spec_.validate();
    report_.kind = spec_.experiment;
    report_.k_devices = spec_.population.k_devices;
    report_.metadata["spec"] = to_json(spec_);
    report_.metadata["models"] = nlohmann::json::array();
  }

  const ExperimentSpec& spec() const { return spec_; }
  Report& report() { return report_; }

  std::uint64_t eval_seed() const { return derive_seed(spec_.seed, {kTagEval}); }

  const Dataset& train_set() { return dataset("train", derive_seed(spec_.seed, {kTagTrainSet}), spec_.train_per_device); }
  const Dataset& test_set() { return dataset("test", derive_seed(spec_.seed, {kTagTestSet}), spec_.test_per_device); }

  TrainConfig train_config(Augmentation aug) const {
    TrainConfig c = spec_.train;
    c.augmentation = aug;
    c.seed = derive_seed(spec_.seed, {kTagTrainCfg});
    c.on_epoch = spec_.train.on_epoch;
    return c;
  }

  ModelSpec model_spec(Architecture a) const { return ModelSpec::make(a, static_cast<std::size_t>(spec_.population.k_devices), spec_.scale); }
  std::uint64_t init_seed(Architecture a) const { return derive_seed(spec_.seed, {kTagInit, arch_index(a)}); }

  // Trained model for (architecture, config) on the training set, optionally
  // restricted to one spreading factor.
  const TrainedModel& model(Architecture a, const TrainConfig& cfg, const std::string& arm,
                            std::optional<int> only_sf = std::nullopt);

  Report finish() {
    report_.metadata["wall_clock_s"] = seconds_since(t0_);
    return std::move(report_);
  }

 private:
  const Dataset& dataset(const std::string& role, std::uint64_t seed, std::size_t n);

  ExperimentSpec spec_;
  ExperimentCache* cache_;
  ExperimentCache local_;
  Clock::time_point t0_;
  Report report_;
  std::map<std::string, std::string> dataset_keys_;
};

const Dataset& Session::dataset(const std::string& role, std::uint64_t seed, std::size_t n) {
  ExperimentCache& c = cache_ ? *cache_ : local_;
  const nlohmann::json desc = {{"population", to_json(spec_.population)}, {"sfs", spec_.sfs}, {"n", n}, {"seed", seed}};
  const std::string key = "dataset-" + key_hash(desc);
  auto d = c.dataset(key);
  if (!d) {
    const auto t = Clock::now();
    d = std::make_shared<const Dataset>(generate_dataset(spec_.population, spec_.sfs, n, seed));
    c.put_dataset(key, d);
    report_.metadata["timing"]["generate_" + role + "_s"] = seconds_since(t);
  }
  if (!dataset_keys_.count(role)) {
    dataset_keys_[role] = key;
    report_.metadata["datasets"][role] = {
        {"seed", seed}, {"records", d->size()}, {"manifest_hash", hex64(manifest_hash(*d))}};
  }
  return *d;
}

const TrainedModel& Session::model(Architecture a, const TrainConfig& cfg, const std::string& arm,
                                   std::optional<int> only_sf) {
  ExperimentCache& c = cache_ ? *cache_ : local_;
  const Dataset& full = train_set();
  const ModelSpec ms = model_spec(a);
  const std::uint64_t init = init_seed(a);
  const nlohmann::json desc = {{"model", to_json(ms)},
                               {"init_seed", init},
                               {"train", to_json(cfg)},
                               {"dataset", dataset_keys_.at("train")},
                               {"only_sf", only_sf ? nlohmann::json(*only_sf) : nlohmann::json(nullptr)}};
  const std::string key = std::string(to_string(a)) + "-" + arm + "-" + key_hash(desc);

  const TrainedArm* hit = c.model(key);
  if (!hit) {
    TrainedArm trained;
    const fs::path ckpt = spec_.checkpoint_dir.empty() ? fs::path() : fs::path(spec_.checkpoint_dir) / (key + ".ckpt");
    if (!ckpt.empty() && fs::exists(ckpt)) {
      trained.model = std::make_shared<const TrainedModel>(load_checkpoint(ckpt.string()));
    } else {
      if (spec_.require_checkpoints) throw DataError("missing checkpoint " + ckpt.string());
      auto m = std::make_shared<TrainedModel>(build_model(ms, init));
      const auto t = Clock::now();
      const TrainResult r = only_sf ? train(*m, filter_sf(full, *only_sf), cfg) : train(*m, full, cfg);
      report_.metadata["timing"]["train_" + key + "_s"] = seconds_since(t);
      trained.history = r.history;
      if (!ckpt.empty()) {
        fs::create_directories(ckpt.parent_path());
        save_checkpoint(*m, ckpt.string());
      }
      trained.model = std::move(m);
    }
    c.put_model(key, std::move(trained));
    hit = c.model(key);
  }
  const TrainedModel& m = *hit->model;
  report_.metadata["models"].push_back({{"key", key},
                                        {"architecture", to_string(a)},
                                        {"arm", arm},
                                        {"init_seed", init},
                                        {"train_config", to_json(cfg)},
                                        {"param_count", param_count(m)},
                                        {"epochs", m.training.epochs},
                                        {"best_val_loss", m.training.best_val_loss},
                                        {"history", history_json(hit->history)}});
  return m;
}

ReportRow scored(const Dataset& test, const std::vector<ProbVector>& probs, std::size_t n_pkt, const TrainedModel& m,
                 std::string arm, int sf, double snr) {
  ReportRow row = score_blocks(test, probs, n_pkt);
  row.architecture = std::string(to_string(m.spec.architecture));
  row.arm = std::move(arm);
  row.sf = sf;
  row.snr_db = snr;
  row.param_count = param_count(m);
  return row;
}

// One row per (sf, snr) for a trained model.
void sweep_rows(Session& s, const TrainedModel& m, const std::string& arm) {
  const Dataset& test = s.test_set();
  for (int sf : s.spec().sfs) {
    const Dataset sub = filter_sf(test, sf);
    for (double snr : s.spec().test_snrs_db) {
      const auto probs = evaluate_records(m, sub, snr, s.eval_seed(), s.spec().realistic_sync);
      s.report().rows.push_back(scored(sub, probs, 1, m, arm, sf, snr));
    }
  }
}

}  // namespace

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::SnrSweep: return "snr_sweep";
    case ExperimentKind::AugCompare: return "aug_compare";
    case ExperimentKind::MultiPacketCurve: return "multipacket_curve";
    case ExperimentKind::SlicingCompare: return "slicing_compare";
    case ExperimentKind::PositionStudy: return "position_study";
    case ExperimentKind::Complexity: return "complexity";
  }
  return "?";
}

ExperimentKind experiment_from_string(std::string_view s) {
  for (auto k : {ExperimentKind::SnrSweep, ExperimentKind::AugCompare, ExperimentKind::MultiPacketCurve,
                 ExperimentKind::SlicingCompare, ExperimentKind::PositionStudy, ExperimentKind::Complexity}) {
    if (s == to_string(k)) return k;
  }
  throw InvalidArgument("unknown experiment '" + std::string(s) +
                        "' (expected snr_sweep, aug_compare, multipacket_curve, slicing_compare, position_study or "
                        "complexity)");
}

void ExperimentSpec::validate() const {
  if (architectures.empty()) throw InvalidArgument("architectures must not be empty");
  if (test_snrs_db.empty()) throw InvalidArgument("test_snrs_db must not be empty");
  for (double s : test_snrs_db) {
    if (!std::isfinite(s)) throw InvalidArgument("test SNRs must be finite");
  }
  if (n_pkt_list.empty()) throw InvalidArgument("n_pkt_list must not be empty");
  for (std::size_t n : n_pkt_list) {
    if (n == 0) throw InvalidArgument("n_pkt values must be at least 1");
  }
  if (sfs.empty()) throw InvalidArgument("sfs must not be empty");
  for (int sf : sfs) LoRaConfig::make(sf);
  if (train_per_device < 2) throw InvalidArgument("train_per_device must be at least 2");
  if (test_per_device == 0) throw InvalidArgument("test_per_device must be positive");
  if (complexity_runs == 0) throw InvalidArgument("complexity_runs must be positive");
  population.validate();
  train.validate();
}

nlohmann::json to_json(const ExperimentSpec& spec) {
  nlohmann::json archs = nlohmann::json::array();
  for (auto a : spec.architectures) archs.push_back(to_string(a));
  return {{"experiment", to_string(spec.experiment)},
          {"architectures", archs},
          {"test_snrs_db", spec.test_snrs_db},
          {"n_pkt_list", spec.n_pkt_list},
          {"output_dir", spec.output_dir},
          {"population", to_json(spec.population)},
          {"sfs", spec.sfs},
          {"train_per_device", spec.train_per_device},
          {"test_per_device", spec.test_per_device},
          {"seed", spec.seed},
          {"scale", to_string(spec.scale)},
          {"train", to_json(spec.train)},
          {"realistic_sync", spec.realistic_sync},
          {"complexity_runs", spec.complexity_runs},
          {"checkpoint_dir", spec.checkpoint_dir},
          {"require_checkpoints", spec.require_checkpoints}};
}

ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  try {
    ExperimentSpec s;
    s.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    if (j.contains("architectures")) {
      s.architectures.clear();
      for (const auto& a : j["architectures"]) s.architectures.push_back(architecture_from_string(a.get<std::string>()));
    }
    s.test_snrs_db = j.value("test_snrs_db", s.test_snrs_db);
    s.n_pkt_list = j.value("n_pkt_list", s.n_pkt_list);
    s.output_dir = j.value("output_dir", s.output_dir);
    if (j.contains("population")) s.population = population_from_json(j["population"]);
    s.sfs = j.value("sfs", s.sfs);
    s.train_per_device = j.value("train_per_device", s.train_per_device);
    s.test_per_device = j.value("test_per_device", s.test_per_device);
    s.seed = j.value("seed", s.seed);
    if (j.contains("scale")) s.scale = scale_from_string(j["scale"].get<std::string>());
    if (j.contains("train")) s.train = train_config_from_json(j["train"]);
    s.realistic_sync = j.value("realistic_sync", s.realistic_sync);
    s.complexity_runs = j.value("complexity_runs", s.complexity_runs);
    s.checkpoint_dir = j.value("checkpoint_dir", s.checkpoint_dir);
    s.require_checkpoints = j.value("require_checkpoints", s.require_checkpoints);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed experiment config: ") + e.what());
  }
}

std::shared_ptr<const Dataset> ExperimentCache::dataset(const std::string& key) const {
  const auto it = datasets_.find(key);
  return it == datasets_.end() ? nullptr : it->second;
}

void ExperimentCache::put_dataset(const std::string& key, std::shared_ptr<const Dataset> d) {
  datasets_[key] = std::move(d);
}

const TrainedArm* ExperimentCache::model(const std::string& key) const {
  const auto it = models_.find(key);
  return it == models_.end() ? nullptr : &it->second;
}

void ExperimentCache::put_model(const std::string& key, TrainedArm arm) { models_[key] = std::move(arm); }

std::vector<ProbVector> evaluate_records(const TrainedModel& model, const Dataset& test, double snr_db,
                                         std::uint64_t seed, bool realistic_sync,
                                         std::optional<std::size_t> slice_position) {
  std::vector<ProbVector> out;
  out.reserve(test.records.size());
  for (const DatasetRecord& r : test.records) {
    const LoRaConfig cfg = LoRaConfig::make(r.sf);
    RngStream rng(derive_seed(seed, {static_cast<std::uint64_t>(r.label), static_cast<std::uint64_t>(r.sf),
                                     r.packet_index, std::bit_cast<std::uint64_t>(snr_db)}));
    ComplexSignal noisy;
    if (!realistic_sync) {
      noisy = add_awgn(r.iq, snr_db, rng);
    } else {
      // The packet lands at a random offset inside a buffer with a symbol of
      // margin on both sides; noise is calibrated to the packet power.
      const std::size_t sps = cfg.samples_per_symbol();
      const std::size_t lead = static_cast<std::size_t>(rng.below(sps));
      ComplexSignal buffer;
      buffer.sample_rate_hz = r.iq.sample_rate_hz;
      buffer.samples.assign(lead + r.iq.size() + sps, cplx{});
      std::copy(r.iq.samples.begin(), r.iq.samples.end(), buffer.samples.begin() + static_cast<std::ptrdiff_t>(lead));
      const double sigma = noise_rms_for(rms(r.iq), snr_db);
      for (cplx& v : buffer.samples) v += rng.complex_normal(sigma * sigma);
      const auto offset = detect_and_sync(buffer, cfg);
      if (!offset) {
        out.emplace_back();
        continue;
      }
      const std::size_t start = std::min(*offset, buffer.size() - r.iq.size());
      noisy.sample_rate_hz = buffer.sample_rate_hz;
      noisy.samples.assign(buffer.samples.begin() + static_cast<std::ptrdiff_t>(start),
                           buffer.samples.begin() + static_cast<std::ptrdiff_t>(start + r.iq.size()));
    }
    if (slice_position) {
      const auto inputs = model_inputs(model.spec, noisy, cfg, slice_position);
      out.push_back(forward(model, inputs.front()));
    } else {
      out.push_back(infer_single(model, noisy, cfg));
    }
  }
  return out;
}

ReportRow score_blocks(const Dataset& test, const std::vector<ProbVector>& probs, std::size_t n_pkt) {
  if (probs.size() != test.records.size()) throw InvalidArgument("one probability vector per record is required");
  if (n_pkt == 0) throw InvalidArgument("n_pkt must be at least 1");
  const auto k = static_cast<std::size_t>(test.population.k_devices);
  std::vector<std::vector<std::size_t>> per_device(k);
  for (std::size_t i = 0; i < test.records.size(); ++i) {
    const int label = test.records[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= k) throw DataError("test label out of range");
    per_device[static_cast<std::size_t>(label)].push_back(i);
  }
  ReportRow row;
  row.n_pkt = n_pkt;
  row.confusion.assign(k, std::vector<std::size_t>(k, 0));
  row.missed.assign(k, 0);
  for (std::size_t d = 0; d < k; ++d) {
    const auto& idx = per_device[d];
    if (idx.empty()) continue;
    if (idx.size() < n_pkt) {
      throw InvalidArgument("device " + std::to_string(d) + " has " + std::to_string(idx.size()) +
                            " test packets, fewer than n_pkt = " + std::to_string(n_pkt));
    }
    for (std::size_t b = 0; b + n_pkt <= idx.size(); b += n_pkt) {
      std::vector<ProbVector> block;
      for (std::size_t j = b; j < b + n_pkt; ++j) {
        if (probs[idx[j]].size() != 0) block.push_back(probs[idx[j]]);
      }
      ++row.total;
      if (block.empty()) {
        ++row.missed[d];
        continue;
      }
      const std::size_t pred = mean_prob(block).argmax();
      ++row.confusion[d][pred];
      if (pred == d) ++row.correct;
    }
  }
  row.accuracy = row.total ? static_cast<double>(row.correct) / static_cast<double>(row.total) : 0.0;
  return row;
}

Report run_snr_sweep(const ExperimentSpec& spec, ExperimentCache* cache) {
  Session s(spec, cache);
  s.train_set();
  for (Architecture a : s.spec().architectures) {
    const TrainConfig cfg = s.train_config(s.spec().train.augmentation);
    const std::string arm(to_string(cfg.augmentation));
    sweep_rows(s, s.model(a, cfg, arm), arm);
  }
  return s.finish();
}

Report run_aug_compare(const ExperimentSpec& spec, ExperimentCache* cache) {
  Session s(spec, cache);
  s.train_set();
  for (Architecture a : s.spec().architectures) {
    for (Augmentation aug : {Augmentation::None, Augmentation::Offline, Augmentation::Online}) {
      TrainConfig cfg = s.train_config(aug);
      if (aug == Augmentation::Offline) cfg.offline_copies = 1;
      const std::string arm(to_string(aug));
      sweep_rows(s, s.model(a, cfg, arm), arm);
    }
  }
  return s.finish();
}

Report run_multipacket_curve(const ExperimentSpec& spec, ExperimentCache* cache) {
  Session s(spec, cache);
  const std::size_t max_n = *std::max_element(spec.n_pkt_list.begin(), spec.n_pkt_list.end());
  if (spec.test_per_device < max_n) {
    throw InvalidArgument("test_per_device (" + std::to_string(spec.test_per_device) + ") is smaller than n_pkt " +
                          std::to_string(max_n));
  }
  s.train_set();
  const Dataset& test = s.test_set();
  for (Architecture a : s.spec().architectures) {
    const TrainConfig cfg = s.train_config(s.spec().train.augmentation);
    const std::string arm(to_string(cfg.augmentation));
    const TrainedModel& m = s.model(a, cfg, arm);
    for (int sf : s.spec().sfs) {
      const Dataset sub = filter_sf(test, sf);
      for (double snr : s.spec().test_snrs_db) {
        const auto probs = evaluate_records(m, sub, snr, s.eval_seed(), s.spec().realistic_sync);
        for (std::size_t n : s.spec().n_pkt_list) s.report().rows.push_back(scored(sub, probs, n, m, arm, sf, snr));
      }
    }
  }
  return s.finish();
}

Report run_slicing_compare(const ExperimentSpec& spec, ExperimentCache* cache) {
  Session s(spec, cache);
  s.train_set();
  for (Architecture a : {Architecture::FlattenFreeCnn, Architecture::SlicingCnn}) {
    const TrainConfig cfg = s.train_config(s.spec().train.augmentation);
    const std::string arm(to_string(cfg.augmentation));
    sweep_rows(s, s.model(a, cfg, arm), arm);
  }
  return s.finish();
}

Report run_position_study(const ExperimentSpec& spec, ExperimentCache* cache) {
  Session s(spec, cache);
  const int sf = spec.sfs.front();
  const ModelSpec ms = s.model_spec(Architecture::SlicingCnn);
  const std::size_t slice_len = ms.input_height + ms.slice_width * (ms.input_height / 2);
  const std::size_t positions = samples_per_preamble(LoRaConfig::make(sf)) / slice_len;
  s.train_set();
  const Dataset test = filter_sf(s.test_set(), sf);
  for (std::size_t j = 0; j < positions; ++j) {
    TrainConfig cfg = s.train_config(s.spec().train.augmentation);
    cfg.slice_position = j;
    const std::string arm = "position" + std::to_string(j + 1);
    const TrainedModel& m = s.model(Architecture::SlicingCnn, cfg, arm, sf);
    for (double snr : s.spec().test_snrs_db) {
      for (std::size_t i = 0; i < positions; ++i) {
        const auto probs = evaluate_records(m, test, snr, s.eval_seed(), s.spec().realistic_sync, i);
        ReportRow row = scored(test, probs, 1, m, arm, sf, snr);
        row.train_position = static_cast<int>(j + 1);
        row.test_position = static_cast<int>(i + 1);
        s.report().rows.push_back(std::move(row));
      }
    }
  }
  return s.finish();
}

Report run_complexity(const ExperimentSpec& spec, ExperimentCache* cache) {
  Session s(spec, cache);
  for (Architecture a : s.spec().architectures) {
    const TrainedModel m = build_model(s.model_spec(a), s.init_seed(a));
    for (int sf : s.spec().sfs) {
      const LoRaConfig cfg = LoRaConfig::make(sf);
      RngStream rng(derive_seed(spec.seed, {kTagTiming, static_cast<std::uint64_t>(sf)}));
      const ComplexSignal iq = add_awgn(synth_preamble(cfg), 30.0, rng);
      infer_single(m, iq, cfg);
      const auto t = Clock::now();
      for (std::size_t r = 0; r < spec.complexity_runs; ++r) infer_single(m, iq, cfg);
      ReportRow row;
      row.architecture = std::string(to_string(a));
      row.arm = "untrained";
      row.sf = sf;
      row.param_count = param_count(m);
      row.inference_ms = 1e3 * seconds_since(t) / static_cast<double>(spec.complexity_runs);
      s.report().rows.push_back(std::move(row));
    }
  }
  return s.finish();
}

Report run_experiment(const ExperimentSpec& spec, ExperimentCache* cache) {
  switch (spec.experiment) {
    case ExperimentKind::SnrSweep: return run_snr_sweep(spec, cache);
    case ExperimentKind::AugCompare: return run_aug_compare(spec, cache);
    case ExperimentKind::MultiPacketCurve: return run_multipacket_curve(spec, cache);
    case ExperimentKind::SlicingCompare: return run_slicing_compare(spec, cache);
    case ExperimentKind::PositionStudy: return run_position_study(spec, cache);
    case ExperimentKind::Complexity: return run_complexity(spec, cache);
  }
  throw InvalidArgument("unknown experiment kind");
}

}  // namespace rffi

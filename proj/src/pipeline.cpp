#include "rffi/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rffi/channel.hpp"
#include "rffi/errors.hpp"
#include "rffi/random.hpp"

namespace rffi {

namespace {

namespace fs = std::filesystem;

// Stream tags keep the seed families of different stages apart.
enum : std::uint64_t {
  kTagRecord = 0x5245,
  kTagOffline = 0x4f46,
  kTagSplit = 0x5350,
  kTagShuffle = 0x5348,
  kTagOnline = 0x4f4e,
  kTagValNoise = 0x564e,
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

std::string file_name(int device, int sf) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "dev%03d_sf%02d.iq", device, sf);
  return buf;
}

void append_f32(std::string& out, float v) {
  const auto u = std::bit_cast<std::uint32_t>(v);
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((u >> s) & 0xff));
}

float read_f32(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(u);
}

// Records grouped by (device, sf) in first-appearance order.
std::vector<std::pair<std::pair<int, int>, std::vector<std::size_t>>> file_groups(const Dataset& d) {
  std::map<std::pair<int, int>, std::size_t> slot;
  std::vector<std::pair<std::pair<int, int>, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto key = std::make_pair(d.records[i].label, d.records[i].sf);
    auto [it, inserted] = slot.emplace(key, groups.size());
    if (inserted) groups.push_back({key, {}});
    groups[it->second].second.push_back(i);
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return groups;
}

std::string group_bytes(const Dataset& d, const std::vector<std::size_t>& idx) {
  std::string out;
  for (std::size_t i : idx) {
    for (const cplx& v : d.records[i].iq.samples) {
      append_f32(out, static_cast<float>(v.real()));
      append_f32(out, static_cast<float>(v.imag()));
    }
  }
  return out;
}

nlohmann::json manifest_with_bytes(const Dataset& d, std::vector<std::string>* bytes_out) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& [key, idx] : file_groups(d)) {
    const auto [device, sf] = key;
    const std::string bytes = group_bytes(d, idx);
    nlohmann::json packets = nlohmann::json::array();
    nlohmann::json snrs = nlohmann::json::array();
    for (std::size_t i : idx) {
      packets.push_back(d.records[i].packet_index);
      if (d.records[i].noiseless()) {
        snrs.push_back(nullptr);
      } else {
        snrs.push_back(d.records[i].snr_db);
      }
    }
    files.push_back({{"device", device},
                     {"sf", sf},
                     {"path", file_name(device, sf)},
                     {"records", idx.size()},
                     {"samples_per_record", samples_per_preamble(LoRaConfig::make(sf))},
                     {"profile_hash", hex64(d.records[idx.front()].profile_hash)},
                     {"fnv1a64", hex64(fnv1a64(bytes.data(), bytes.size()))},
                     {"packet_index", packets},
                     {"snr_db", snrs}});
    if (bytes_out) bytes_out->push_back(bytes);
  }
  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& p : d.profiles) profiles.push_back(to_json(p));
  nlohmann::json aug = nullptr;
  if (d.augmentation) {
    aug = {{"copies", d.augmentation->copies},
           {"snr_low_db", d.augmentation->snr_db.low},
           {"snr_high_db", d.augmentation->snr_db.high},
           {"seed", d.augmentation->seed},
           {"source_hash", d.augmentation->source_hash}};
  }
  return {{"format", "rffi-dataset"},
          {"version", 1},
          {"seed", d.seed},
          {"population", to_json(d.population)},
          {"profiles", profiles},
          {"sfs", d.sfs},
          {"n_per_device_per_sf", d.n_per_device_per_sf},
          {"augmentation", aug},
          {"files", files}};
}

void validate_sfs(const std::vector<int>& sfs) {
  if (sfs.empty()) throw InvalidArgument("at least one spreading factor is required");
  for (int sf : sfs) LoRaConfig::make(sf);
}

}  // namespace

Dataset generate_dataset(const PopulationSpec& population, const std::vector<int>& sfs,
                         std::size_t n_per_device_per_sf, std::uint64_t seed) {
  population.validate();
  validate_sfs(sfs);
  if (n_per_device_per_sf == 0) throw InvalidArgument("n_per_device_per_sf must be positive");
  Dataset d;
  d.population = population;
  d.profiles = draw_profiles(population);
  d.sfs = sfs;
  d.n_per_device_per_sf = n_per_device_per_sf;
  d.seed = seed;
  d.records.reserve(d.profiles.size() * sfs.size() * n_per_device_per_sf);

  std::vector<ComplexSignal> clean;
  for (int sf : sfs) clean.push_back(synth_preamble(LoRaConfig::make(sf)));
  for (const DeviceProfile& profile : d.profiles) {
    const std::uint64_t phash = profile_hash(profile);
    for (std::size_t s = 0; s < sfs.size(); ++s) {
      const std::size_t sps = LoRaConfig::make(sfs[s]).samples_per_symbol();
      for (std::size_t i = 0; i < n_per_device_per_sf; ++i) {
        RngStream rng(derive_seed(seed, {kTagRecord, static_cast<std::uint64_t>(profile.device_id),
                                         static_cast<std::uint64_t>(sfs[s]), i}));
        DatasetRecord r;
        r.iq = apply_impairments(clean[s], profile, rng, true, sps);
        quantize_to_float(r.iq);
        r.label = profile.device_id;
        r.sf = sfs[s];
        r.packet_index = static_cast<std::uint32_t>(i);
        r.profile_hash = phash;
        d.records.push_back(std::move(r));
      }
    }
  }
  return d;
}

nlohmann::json dataset_manifest(const Dataset& dataset) { return manifest_with_bytes(dataset, nullptr); }

std::uint64_t manifest_hash(const Dataset& dataset) {
  const std::string s = dataset_manifest(dataset).dump();
  return fnv1a64(s.data(), s.size());
}

void save_dataset(const Dataset& dataset, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create dataset directory " + dir + ": " + ec.message());
  std::vector<std::string> bytes;
  const nlohmann::json manifest = manifest_with_bytes(dataset, &bytes);
  for (std::size_t f = 0; f < bytes.size(); ++f) {
    const fs::path path = fs::path(dir) / manifest["files"][f]["path"].get<std::string>();
    std::ofstream out(path, std::ios::binary);
    out.write(bytes[f].data(), static_cast<std::streamsize>(bytes[f].size()));
    if (!out) throw DataError("failed to write " + path.string());
  }
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ofstream out(mpath);
  out << manifest.dump(1) << '\n';
  if (!out) throw DataError("failed to write " + mpath.string());
}

Dataset load_dataset(const std::string& dir) {
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw DataError("cannot open " + mpath.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
    if (m.at("format") != "rffi-dataset") throw DataError(mpath.string() + " is not a dataset manifest");
    Dataset d;
    d.seed = m.at("seed").get<std::uint64_t>();
    d.population = population_from_json(m.at("population"));
    for (const auto& p : m.at("profiles")) d.profiles.push_back(profile_from_json(p));
    d.sfs = m.at("sfs").get<std::vector<int>>();
    d.n_per_device_per_sf = m.at("n_per_device_per_sf").get<std::size_t>();
    if (!m.at("augmentation").is_null()) {
      const auto& a = m["augmentation"];
      d.augmentation = OfflineAugmentation{a.at("copies").get<int>(),
                                           {a.at("snr_low_db").get<double>(), a.at("snr_high_db").get<double>()},
                                           a.at("seed").get<std::uint64_t>(),
                                           a.at("source_hash").get<std::string>()};
    }
    for (const auto& f : m.at("files")) {
      const fs::path path = fs::path(dir) / f.at("path").get<std::string>();
      std::ifstream bin(path, std::ios::binary);
      if (!bin) throw DataError("cannot open " + path.string());
      const std::string bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
      if (hex64(fnv1a64(bytes.data(), bytes.size())) != f.at("fnv1a64").get<std::string>()) {
        throw DataError("checksum mismatch in " + path.string());
      }
      const int sf = f.at("sf").get<int>();
      const auto n = f.at("records").get<std::size_t>();
      const auto spr = f.at("samples_per_record").get<std::size_t>();
      const LoRaConfig cfg = LoRaConfig::make(sf);
      if (spr != samples_per_preamble(cfg)) throw DataError("record length does not match SF in " + path.string());
      if (bytes.size() != n * spr * 8) throw DataError("unexpected size of " + path.string());
      const auto& packets = f.at("packet_index");
      const auto& snrs = f.at("snr_db");
      if (packets.size() != n || snrs.size() != n) throw DataError("index length mismatch for " + path.string());
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
      for (std::size_t r = 0; r < n; ++r) {
        DatasetRecord rec;
        rec.label = f.at("device").get<int>();
        rec.sf = sf;
        rec.packet_index = packets[r].get<std::uint32_t>();
        rec.profile_hash = parse_hex64(f.at("profile_hash").get<std::string>());
        if (!snrs[r].is_null()) rec.snr_db = snrs[r].get<double>();
        rec.iq.sample_rate_hz = cfg.sample_rate_hz;
        rec.iq.samples.resize(spr);
        for (std::size_t k = 0; k < spr; ++k, p += 8) rec.iq.samples[k] = {read_f32(p), read_f32(p + 4)};
        if (rec.label < 0 || rec.label >= d.population.k_devices) {
          throw DataError("label out of range in " + path.string());
        }
        d.records.push_back(std::move(rec));
      }
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + mpath.string() + ": " + e.what());
  }
}

Dataset augment_offline(const Dataset& dataset, ParamRange snr_db, int copies, std::uint64_t seed) {
  if (copies < 1) throw InvalidArgument("copies must be at least 1");
  if (!std::isfinite(snr_db.low) || !std::isfinite(snr_db.high) || snr_db.low > snr_db.high) {
    throw InvalidArgument("SNR range must be finite with low <= high");
  }
  if (dataset.augmentation) throw InvalidArgument("dataset is already offline-augmented");
  Dataset out;
  out.population = dataset.population;
  out.profiles = dataset.profiles;
  out.sfs = dataset.sfs;
  out.n_per_device_per_sf = dataset.n_per_device_per_sf;
  out.seed = dataset.seed;
  out.augmentation = OfflineAugmentation{copies, snr_db, seed, hex64(manifest_hash(dataset))};
  out.records.reserve(dataset.records.size() * static_cast<std::size_t>(copies));
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    for (int c = 0; c < copies; ++c) {
      RngStream rng(derive_seed(seed, {kTagOffline, i, static_cast<std::uint64_t>(c)}));
      DatasetRecord r = dataset.records[i];
      r.snr_db = rng.uniform(snr_db.low, snr_db.high);
      r.iq = add_awgn(dataset.records[i].iq, r.snr_db, rng);
      quantize_to_float(r.iq);
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

Dataset filter_sf(const Dataset& dataset, int sf) {
  Dataset out;
  out.population = dataset.population;
  out.profiles = dataset.profiles;
  out.sfs = {sf};
  out.n_per_device_per_sf = dataset.n_per_device_per_sf;
  out.seed = dataset.seed;
  out.augmentation = dataset.augmentation;
  for (const auto& r : dataset.records) {
    if (r.sf == sf) out.records.push_back(r);
  }
  if (out.records.empty()) throw InvalidArgument("dataset has no records at SF" + std::to_string(sf));
  return out;
}

std::string_view to_string(Augmentation a) {
  switch (a) {
    case Augmentation::None: return "none";
    case Augmentation::Offline: return "offline";
    case Augmentation::Online: return "online";
  }
  return "?";
}

Augmentation augmentation_from_string(std::string_view s) {
  if (s == "none") return Augmentation::None;
  if (s == "offline") return Augmentation::Offline;
  if (s == "online") return Augmentation::Online;
  throw InvalidArgument("unknown augmentation '" + std::string(s) + "' (expected none, offline or online)");
}

void TrainConfig::validate() const {
  if (!std::isfinite(snr_low_db) || !std::isfinite(snr_high_db) || snr_low_db > snr_high_db) {
    throw InvalidArgument("training SNR range must be finite with low <= high");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidArgument("val_fraction must lie in (0, 1)");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(lr0 > 0.0)) throw InvalidArgument("lr0 must be positive");
  if (max_epochs < 1) throw InvalidArgument("max_epochs must be at least 1");
  if (augmentation == Augmentation::Offline && offline_copies < 1) throw InvalidArgument("offline_copies must be >= 1");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json j = {{"augmentation", to_string(cfg.augmentation)},
                      {"offline_copies", cfg.offline_copies},
                      {"snr_low_db", cfg.snr_low_db},
                      {"snr_high_db", cfg.snr_high_db},
                      {"batch_size", cfg.batch_size},
                      {"lr0", cfg.lr0},
                      {"val_fraction", cfg.val_fraction},
                      {"lr_factor", cfg.scheduler.factor},
                      {"lr_patience", cfg.scheduler.lr_patience},
                      {"stop_patience", cfg.scheduler.stop_patience},
                      {"min_delta", cfg.scheduler.min_delta},
                      {"max_epochs", cfg.max_epochs},
                      {"seed", cfg.seed}};
  j["slice_position"] = cfg.slice_position ? nlohmann::json(*cfg.slice_position) : nlohmann::json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("augmentation")) c.augmentation = augmentation_from_string(j["augmentation"].get<std::string>());
  c.offline_copies = j.value("offline_copies", c.offline_copies);
  c.snr_low_db = j.value("snr_low_db", c.snr_low_db);
  c.snr_high_db = j.value("snr_high_db", c.snr_high_db);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr0 = j.value("lr0", c.lr0);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.scheduler.factor = j.value("lr_factor", c.scheduler.factor);
  c.scheduler.lr_patience = j.value("lr_patience", c.scheduler.lr_patience);
  c.scheduler.stop_patience = j.value("stop_patience", c.scheduler.stop_patience);
  c.scheduler.min_delta = j.value("min_delta", c.scheduler.min_delta);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("slice_position") && !j["slice_position"].is_null()) {
    c.slice_position = j["slice_position"].get<std::size_t>();
  }
  c.validate();
  return c;
}

LoRaConfig config_for_length(std::size_t n_samples) {
  for (int sf = 7; sf <= 12; ++sf) {
    const LoRaConfig cfg = LoRaConfig::make(sf);
    if (samples_per_preamble(cfg) == n_samples) return cfg;
  }
  throw InvalidArgument("no spreading factor produces a " + std::to_string(n_samples) + "-sample preamble");
}

std::vector<Spectrogram> model_inputs(const ModelSpec& spec, const ComplexSignal& iq, const LoRaConfig& config,
                                      std::optional<std::size_t> slice_position) {
  const StftConfig stft_cfg{spec.input_height, spec.input_height / 2};
  const ComplexSignal pre = preprocess_preamble(iq, config);
  std::vector<Spectrogram> out;
  if (spec.architecture != Architecture::SlicingCnn) {
    if (slice_position) throw InvalidArgument("slice_position applies to the slicing CNN only");
    out.push_back(channel_independent_spectrogram(pre, stft_cfg));
  } else {
    const std::size_t slice_len = stft_cfg.window_len + spec.slice_width * stft_cfg.hop;
    const std::vector<ComplexSignal> slices = slice_signal(pre, slice_len);
    if (slice_position) {
      if (*slice_position >= slices.size()) {
        throw InvalidArgument("slice position " + std::to_string(*slice_position) + " out of range (" +
                              std::to_string(slices.size()) + " slices)");
      }
      out.push_back(channel_independent_spectrogram(slices[*slice_position], stft_cfg));
    } else {
      for (const auto& s : slices) out.push_back(channel_independent_spectrogram(s, stft_cfg));
    }
  }
  for (auto& s : out) s.sf_tag = config.sf;
  return out;
}

ProbVector mean_prob(const std::vector<ProbVector>& vectors) {
  if (vectors.empty()) throw InvalidArgument("cannot average zero probability vectors");
  std::vector<double> acc(vectors.front().size(), 0.0);
  for (const auto& v : vectors) {
    if (v.size() != acc.size()) throw DimensionMismatch("probability vectors differ in length");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  for (double& a : acc) a /= static_cast<double>(vectors.size());
  return ProbVector(std::move(acc));
}

ProbVector infer_single(const TrainedModel& model, const ComplexSignal& iq, const LoRaConfig& config) {
  std::vector<ProbVector> outs;
  for (const Spectrogram& s : model_inputs(model.spec, iq, config)) outs.push_back(forward(model, s));
  return mean_prob(outs);
}

ProbVector infer_single(const TrainedModel& model, const ComplexSignal& iq) {
  return infer_single(model, iq, config_for_length(iq.size()));
}

InferenceHistory::InferenceHistory(std::size_t n_pkt) : n_pkt_(n_pkt) {
  if (n_pkt == 0) throw InvalidArgument("n_pkt must be at least 1");
}

void InferenceHistory::push(const ProbVector& p) {
  if (n_pkt_ == 1) return;
  entries_.push_back(p);
  while (entries_.size() > n_pkt_ - 1) entries_.pop_front();
}

Fusion fuse_multi_packet(InferenceHistory& history, const ProbVector& incoming) {
  std::vector<ProbVector> all(history.entries().begin(), history.entries().end());
  all.push_back(incoming);
  Fusion f;
  f.probabilities = mean_prob(all);
  f.label = f.probabilities.argmax();
  history.push(incoming);
  return f;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,lr,train_loss,val_loss,val_acc\n";
  for (const auto& e : history) {
    out << e.epoch << ',' << e.learning_rate << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_accuracy
        << '\n';
  }
  return out.str();
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream out(path);
  out << history_csv(history);
  if (!out) throw DataError("failed to write " + path);
}

// ---- training ----

namespace {

struct Item {
  std::size_t record;
  std::optional<std::size_t> slice;
  int label;
};

class Trainer {
 public:
  Trainer(TrainedModel& model, const Dataset& dataset, const TrainConfig& cfg)
      : model_(model), data_(dataset), cfg_(cfg) {}

  TrainResult run();

 private:
  std::vector<float> input_for(const DatasetRecord& rec, const Item& item, std::optional<std::uint64_t> noise_seed,
                               ParamRange snr) const;
  std::vector<Item> items_for(const std::vector<std::size_t>& records) const;

  TrainedModel& model_;
  const Dataset& data_;
  const TrainConfig& cfg_;
};

std::vector<float> Trainer::input_for(const DatasetRecord& rec, const Item& item,
                                      std::optional<std::uint64_t> noise_seed, ParamRange snr) const {
  const LoRaConfig lcfg = LoRaConfig::make(rec.sf);
  const ComplexSignal* iq = &rec.iq;
  ComplexSignal noisy;
  if (noise_seed) {
    RngStream rng(*noise_seed);
    noisy = add_awgn(rec.iq, rng.uniform(snr.low, snr.high), rng);
    iq = &noisy;
  }
  const auto specs = model_inputs(model_.spec, *iq, lcfg, item.slice);
  return to_model_input(specs.front());
}

std::vector<Item> Trainer::items_for(const std::vector<std::size_t>& records) const {
  std::vector<Item> items;
  const bool slicing = model_.spec.architecture == Architecture::SlicingCnn;
  const std::size_t slice_len = model_.spec.input_height + model_.spec.slice_width * (model_.spec.input_height / 2);
  for (std::size_t r : records) {
    const int label = data_.records[r].label;
    if (!slicing) {
      items.push_back({r, std::nullopt, label});
    } else if (cfg_.slice_position) {
      items.push_back({r, cfg_.slice_position, label});
    } else {
      const std::size_t n = data_.records[r].iq.size() / slice_len;
      for (std::size_t s = 0; s < n; ++s) items.push_back({r, s, label});
    }
  }
  return items;
}

TrainResult Trainer::run() {
  cfg_.validate();
  if (cfg_.slice_position && model_.spec.architecture != Architecture::SlicingCnn) {
    throw InvalidArgument("slice_position applies to the slicing CNN only");
  }
  const std::size_t k = model_.spec.k_classes;
  std::vector<std::vector<std::size_t>> by_label(k);
  for (std::size_t i = 0; i < data_.records.size(); ++i) {
    const int label = data_.records[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw DataError("record " + std::to_string(i) + " has label " + std::to_string(label) + " outside [0, " +
                      std::to_string(k) + ")");
    }
    by_label[static_cast<std::size_t>(label)].push_back(i);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (by_label[c].size() < 2) {
      throw DataError("label " + std::to_string(c) + " has fewer than two records; every device needs training and "
                      "validation data");
    }
  }

  // Stratified split so every label appears on both sides.
  std::vector<std::size_t> train_rec, val_rec;
  RngStream split_rng(derive_seed(cfg_.seed, {kTagSplit}));
  for (auto& idx : by_label) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[split_rng.below(i)]);
    auto n_val = static_cast<std::size_t>(std::llround(cfg_.val_fraction * static_cast<double>(idx.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
    val_rec.insert(val_rec.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_rec.insert(train_rec.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(train_rec.begin(), train_rec.end());
  std::sort(val_rec.begin(), val_rec.end());

  const ParamRange snr{cfg_.snr_low_db, cfg_.snr_high_db};
  const bool noisy_val = cfg_.augmentation != Augmentation::None;

  // Offline copies are materialised once and then treated as a fixed set.
  Dataset offline;
  const Dataset* train_src = &data_;
  if (cfg_.augmentation == Augmentation::Offline) {
    Dataset subset;
    subset.population = data_.population;
    subset.sfs = data_.sfs;
    for (std::size_t r : train_rec) subset.records.push_back(data_.records[r]);
    offline = augment_offline(subset, snr, cfg_.offline_copies, derive_seed(cfg_.seed, {kTagOffline}));
    train_src = &offline;
    train_rec.resize(offline.records.size());
    for (std::size_t i = 0; i < train_rec.size(); ++i) train_rec[i] = i;
  }

  std::vector<Item> train_items;
  {
    // items_for reads labels and lengths from data_, so build against the source in use.
    Trainer view(model_, *train_src, cfg_);
    train_items = view.items_for(train_rec);
  }
  const std::vector<Item> val_items = items_for(val_rec);

  const bool online = cfg_.augmentation == Augmentation::Online;
  std::vector<std::vector<float>> train_cache;
  if (!online) {
    train_cache.reserve(train_items.size());
    for (const Item& it : train_items) {
      train_cache.push_back(input_for(train_src->records[it.record], it, std::nullopt, snr));
    }
  }
  std::vector<std::vector<float>> val_cache;
  val_cache.reserve(val_items.size());
  for (const Item& it : val_items) {
    std::optional<std::uint64_t> seed;
    if (noisy_val) seed = derive_seed(cfg_.seed, {kTagValNoise, it.record});
    val_cache.push_back(input_for(data_.records[it.record], it, seed, snr));
  }

  auto& params = model_.net->parameters();
  const std::size_t height = model_.spec.input_height;
  auto to_tensor = [height](const std::vector<float>& v) {
    return tn::Tensor<float>::constant({height, v.size() / height}, v);
  };

  TrainResult result;
  tn::TrainState state;
  state.learning_rate = cfg_.lr0;
  std::vector<std::vector<float>> best = model_.snapshot();
  double last_val = std::numeric_limits<double>::quiet_NaN();
  int epoch = 0;
  std::vector<std::size_t> order(train_items.size());
  for (epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream shuffle(derive_seed(cfg_.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      const float inv_batch = 1.0f / static_cast<float>(end - start);
      tn::zero_grads(params);
      for (std::size_t b = start; b < end; ++b) {
        const Item& it = train_items[order[b]];
        std::vector<float> input;
        if (online) {
          input = input_for(train_src->records[it.record], it,
                            derive_seed(cfg_.seed, {kTagOnline, static_cast<std::uint64_t>(epoch), it.record}), snr);
        }
        const tn::Tensor<float> x = to_tensor(online ? input : train_cache[order[b]]);
        const auto ce = tn::softmax_cross_entropy(model_.net->logits(x), static_cast<std::size_t>(it.label));
        const double l = ce.loss.item();
        if (!std::isfinite(l)) {
          throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(state.step + 1) + " (learning rate " +
                                 std::to_string(state.learning_rate) + ")");
        }
        ce.loss.backward(inv_batch);
        loss_sum += l;
      }
      ++state.step;
      tn::adam_step(params, state.learning_rate, state.step);
    }
    if (online) {
      // Slices of one record share a noise draw within an epoch.
      std::size_t draws = 0;
      std::size_t prev = static_cast<std::size_t>(-1);
      for (const Item& it : train_items) {
        if (it.record != prev) ++draws;
        prev = it.record;
      }
      result.online_noise_draws += draws;
    }

    double val_loss = 0.0;
    std::size_t correct = 0;
    {
      tn::NoGradGuard no_grad;
      for (std::size_t i = 0; i < val_items.size(); ++i) {
        const auto ce = tn::softmax_cross_entropy(model_.net->logits(to_tensor(val_cache[i])),
                                                  static_cast<std::size_t>(val_items[i].label));
        val_loss += ce.loss.item();
        const auto top = std::max_element(ce.probabilities.begin(), ce.probabilities.end());
        if (static_cast<int>(top - ce.probabilities.begin()) == val_items[i].label) ++correct;
      }
    }
    val_loss /= static_cast<double>(val_items.size());
    if (!std::isfinite(val_loss)) {
      throw TrainingDiverged("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    last_val = val_loss;

    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = state.learning_rate;
    stats.train_loss = loss_sum / static_cast<double>(train_items.size());
    stats.val_loss = val_loss;
    stats.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_items.size());
    result.history.push_back(stats);
    if (cfg_.on_epoch) cfg_.on_epoch(stats);

    if (val_loss < state.best_val_loss - cfg_.scheduler.min_delta) best = model_.snapshot();
    state = tn::scheduler_update(state, val_loss, cfg_.scheduler);
    if (state.stop) break;
  }
  model_.restore(best);
  model_.training.epochs = static_cast<int>(result.history.size());
  model_.training.final_val_loss = last_val;
  model_.training.best_val_loss = state.best_val_loss;
  model_.training.augmentation = std::string(to_string(cfg_.augmentation));
  model_.training.seed = cfg_.seed;
  return result;
}

}  // namespace

TrainResult train(TrainedModel& model, const Dataset& dataset, const TrainConfig& cfg) {
#if defined(__GLIBC__)
  // Per-sample graphs allocate and free multi-megabyte buffers; without this
  // glibc returns them to the kernel every step and page faults dominate.
  static const bool tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)tuned;
#endif
  if (!model.net) throw InvalidArgument("model has no network");
  if (dataset.records.empty()) throw DataError("training dataset is empty");
  return Trainer(model, dataset, cfg).run();
}

}  // namespace rffi

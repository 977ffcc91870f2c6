#include "rffi/rffi.h"

#include <cstring>
#include <filesystem>
#include <map>
#include <new>
#include <sstream>
#include <string>

#include "rffi/errors.hpp"
#include "rffi/harness.hpp"
#include "rffi/pipeline.hpp"

struct rffi_dataset {
  rffi::Dataset value;
};

struct rffi_model {
  rffi::TrainedModel value;
};

struct rffi_history {
  std::size_t n_pkt;
  std::map<std::string, rffi::InferenceHistory> streams;
};

struct rffi_report {
  rffi::Report value;
};

namespace {

thread_local std::string g_last_error;

rffi_status fail(rffi_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs f, translating exceptions into status codes.
template <class F>
rffi_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return RFFI_OK;
  } catch (const rffi::InvalidArgument& e) {
    return fail(RFFI_ERR_USAGE, e.what());
  } catch (const rffi::DataError& e) {
    return fail(RFFI_ERR_DATA, e.what());
  } catch (const rffi::TrainingDiverged& e) {
    return fail(RFFI_ERR_DIVERGED, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(RFFI_ERR_USAGE, std::string("invalid JSON: ") + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(RFFI_ERR_DATA, e.what());
  } catch (const std::bad_alloc&) {
    return fail(RFFI_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RFFI_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(RFFI_ERR_INTERNAL, "unknown error");
  }
}

void require(bool cond, const char* what) {
  if (!cond) throw rffi::InvalidArgument(what);
}

nlohmann::json parse_json(const char* text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw rffi::InvalidArgument(std::string("cannot parse ") + what + ": " + e.what());
  }
}

std::function<void(const rffi::EpochStats&)> epoch_hook(rffi_epoch_callback cb, void* user) {
  if (!cb) return {};
  return [cb, user](const rffi::EpochStats& e) {
    cb(e.epoch, e.learning_rate, e.train_loss, e.val_loss, e.val_accuracy, user);
  };
}

}  // namespace

extern "C" {

const char* rffi_version(void) { return "0.1.0"; }

const char* rffi_last_error(void) { return g_last_error.c_str(); }

void rffi_string_free(char* s) { delete[] s; }

rffi_status rffi_dataset_generate(const char* population_json, int k_devices, const int* sfs, size_t n_sfs,
                                  size_t per_device_per_sf, uint64_t seed, rffi_dataset** out) {
  return guarded([&] {
    require(out != nullptr, "out must not be NULL");
    require(sfs != nullptr || n_sfs == 0, "sfs must not be NULL");
    rffi::PopulationSpec pop;
    if (population_json) pop = rffi::population_from_json(parse_json(population_json, "population"));
    if (k_devices > 0) pop.k_devices = k_devices;
    auto d = std::make_unique<rffi_dataset>();
    d->value = rffi::generate_dataset(pop, std::vector<int>(sfs, sfs + n_sfs), per_device_per_sf, seed);
    *out = d.release();
  });
}

rffi_status rffi_dataset_save(const rffi_dataset* dataset, const char* dir) {
  return guarded([&] {
    require(dataset && dir, "dataset and dir must not be NULL");
    rffi::save_dataset(dataset->value, dir);
  });
}

rffi_status rffi_dataset_load(const char* dir, rffi_dataset** out) {
  return guarded([&] {
    require(dir && out, "dir and out must not be NULL");
    auto d = std::make_unique<rffi_dataset>();
    d->value = rffi::load_dataset(dir);
    *out = d.release();
  });
}

rffi_status rffi_dataset_augment(const rffi_dataset* dataset, double snr_min_db, double snr_max_db, int copies,
                                 uint64_t seed, rffi_dataset** out) {
  return guarded([&] {
    require(dataset && out, "dataset and out must not be NULL");
    auto d = std::make_unique<rffi_dataset>();
    d->value = rffi::augment_offline(dataset->value, {snr_min_db, snr_max_db}, copies, seed);
    *out = d.release();
  });
}

rffi_status rffi_dataset_size(const rffi_dataset* dataset, size_t* out) {
  return guarded([&] {
    require(dataset && out, "dataset and out must not be NULL");
    *out = dataset->value.size();
  });
}

rffi_status rffi_dataset_num_devices(const rffi_dataset* dataset, int* out) {
  return guarded([&] {
    require(dataset && out, "dataset and out must not be NULL");
    *out = dataset->value.k_devices();
  });
}

rffi_status rffi_dataset_manifest_hash(const rffi_dataset* dataset, uint64_t* out) {
  return guarded([&] {
    require(dataset && out, "dataset and out must not be NULL");
    *out = rffi::manifest_hash(dataset->value);
  });
}

void rffi_dataset_free(rffi_dataset* dataset) { delete dataset; }

rffi_status rffi_model_create(const char* architecture, int k_classes, const char* scale, uint64_t seed,
                              rffi_model** out) {
  return guarded([&] {
    require(architecture && out, "architecture and out must not be NULL");
    require(k_classes >= 2, "k_classes must be at least 2");
    const rffi::Scale sc = scale ? rffi::scale_from_string(scale) : rffi::Scale::Desk;
    const auto spec =
        rffi::ModelSpec::make(rffi::architecture_from_string(architecture), static_cast<std::size_t>(k_classes), sc);
    auto m = std::make_unique<rffi_model>();
    m->value = rffi::build_model(spec, seed);
    *out = m.release();
  });
}

rffi_status rffi_model_train(rffi_model* model, const rffi_dataset* dataset, const char* train_config_json,
                             rffi_epoch_callback on_epoch, void* user, const char* history_csv_path) {
  return guarded([&] {
    require(model && dataset, "model and dataset must not be NULL");
    rffi::TrainConfig cfg;
    if (train_config_json) cfg = rffi::train_config_from_json(parse_json(train_config_json, "training config"));
    cfg.on_epoch = epoch_hook(on_epoch, user);
    const rffi::TrainResult r = rffi::train(model->value, dataset->value, cfg);
    if (history_csv_path) rffi::write_history_csv(r.history, history_csv_path);
  });
}

rffi_status rffi_model_save(const rffi_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "model and path must not be NULL");
    rffi::save_checkpoint(model->value, path);
  });
}

rffi_status rffi_model_load(const char* path, rffi_model** out) {
  return guarded([&] {
    require(path && out, "path and out must not be NULL");
    auto m = std::make_unique<rffi_model>();
    m->value = rffi::load_checkpoint(path);
    *out = m.release();
  });
}

rffi_status rffi_model_param_count(const rffi_model* model, size_t* out) {
  return guarded([&] {
    require(model && out, "model and out must not be NULL");
    *out = rffi::param_count(model->value);
  });
}

rffi_status rffi_model_num_classes(const rffi_model* model, size_t* out) {
  return guarded([&] {
    require(model && out, "model and out must not be NULL");
    *out = model->value.spec.k_classes;
  });
}

rffi_status rffi_model_infer(const rffi_model* model, const float* iq, size_t n_samples, double* probs,
                             size_t probs_len) {
  return guarded([&] {
    require(model && iq && probs, "model, iq and probs must not be NULL");
    if (probs_len != model->value.spec.k_classes) {
      throw rffi::DimensionMismatch("probs_len " + std::to_string(probs_len) + " does not match the model's " +
                                    std::to_string(model->value.spec.k_classes) + " classes");
    }
    const rffi::LoRaConfig cfg = rffi::config_for_length(n_samples);
    rffi::ComplexSignal sig;
    sig.sample_rate_hz = cfg.sample_rate_hz;
    sig.samples.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) sig.samples[i] = {iq[2 * i], iq[2 * i + 1]};
    const rffi::ProbVector p = rffi::infer_single(model->value, sig, cfg);
    std::copy(p.values().begin(), p.values().end(), probs);
  });
}

void rffi_model_free(rffi_model* model) { delete model; }

rffi_status rffi_history_create(size_t n_pkt, rffi_history** out) {
  return guarded([&] {
    require(out != nullptr, "out must not be NULL");
    require(n_pkt >= 1, "n_pkt must be at least 1");
    *out = new rffi_history{n_pkt, {}};
  });
}

rffi_status rffi_history_fuse(rffi_history* history, const char* stream_key, const double* probs, size_t k,
                              double* fused, size_t* label) {
  return guarded([&] {
    require(history && stream_key && probs && fused && label, "arguments must not be NULL");
    const rffi::ProbVector incoming(std::vector<double>(probs, probs + k));
    if (!incoming.valid(1e-6)) throw rffi::InvalidArgument("probs is not a probability vector");
    auto it = history->streams.try_emplace(stream_key, history->n_pkt).first;
    if (!it->second.entries().empty() && it->second.entries().front().size() != k) {
      throw rffi::DimensionMismatch("stream '" + std::string(stream_key) + "' holds vectors of length " +
                                    std::to_string(it->second.entries().front().size()));
    }
    const rffi::Fusion f = rffi::fuse_multi_packet(it->second, incoming);
    std::copy(f.probabilities.values().begin(), f.probabilities.values().end(), fused);
    *label = f.label;
  });
}

void rffi_history_free(rffi_history* history) { delete history; }

rffi_status rffi_experiment_run(const char* spec_json, rffi_epoch_callback on_epoch, void* user, rffi_report** out) {
  return guarded([&] {
    require(spec_json && out, "spec_json and out must not be NULL");
    rffi::ExperimentSpec spec = rffi::experiment_spec_from_json(parse_json(spec_json, "experiment config"));
    spec.train.on_epoch = epoch_hook(on_epoch, user);
    auto r = std::make_unique<rffi_report>();
    r->value = rffi::run_experiment(spec);
    *out = r.release();
  });
}

rffi_status rffi_report_load(const char* path, rffi_report** out) {
  return guarded([&] {
    require(path && out, "path and out must not be NULL");
    auto r = std::make_unique<rffi_report>();
    r->value = rffi::load_report(path);
    *out = r.release();
  });
}

rffi_status rffi_report_emit(const rffi_report* report, const char* dir, const char* formats) {
  return guarded([&] {
    require(report && dir && formats, "report, dir and formats must not be NULL");
    std::vector<std::string> list;
    std::stringstream ss(formats);
    for (std::string f; std::getline(ss, f, ',');) {
      if (!f.empty()) list.push_back(f);
    }
    require(!list.empty(), "at least one format is required");
    rffi::emit_report(report->value, dir, list);
  });
}

rffi_status rffi_report_json(const rffi_report* report, char** out) {
  return guarded([&] {
    require(report && out, "report and out must not be NULL");
    const std::string s = rffi::to_json(report->value).dump();
    char* buf = new char[s.size() + 1];
    std::memcpy(buf, s.c_str(), s.size() + 1);
    *out = buf;
  });
}

void rffi_report_free(rffi_report* report) { delete report; }

}  // extern "C"

/* C interface to the rffi library. All functions return an rffi_status;
 * on failure rffi_last_error() describes the problem (per thread). Objects
 * are opaque and released with the matching *_free function. */
#ifndef RFFI_RFFI_H
#define RFFI_RFFI_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(RFFI_BUILDING_LIBRARY)
#define RFFI_API __declspec(dllexport)
#else
#define RFFI_API __declspec(dllimport)
#endif
#else
#define RFFI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rffi_status {
  RFFI_OK = 0,
  RFFI_ERR_USAGE = 1,    /* invalid argument, malformed config, shape mismatch */
  RFFI_ERR_DATA = 2,     /* unreadable, corrupt or inconsistent data */
  RFFI_ERR_DIVERGED = 3, /* non-finite training loss */
  RFFI_ERR_INTERNAL = 4
} rffi_status;

typedef struct rffi_dataset rffi_dataset;
typedef struct rffi_model rffi_model;
typedef struct rffi_history rffi_history;
typedef struct rffi_report rffi_report;

typedef void (*rffi_epoch_callback)(int epoch, double learning_rate, double train_loss, double val_loss,
                                    double val_accuracy, void* user);

RFFI_API const char* rffi_version(void);
/* Message of the last failed call on this thread; empty if none. */
RFFI_API const char* rffi_last_error(void);
/* Releases strings returned through char** out-parameters. */
RFFI_API void rffi_string_free(char* s);

/* population_json may be NULL for the default population; k_devices > 0
 * overrides its device count. */
RFFI_API rffi_status rffi_dataset_generate(const char* population_json, int k_devices, const int* sfs, size_t n_sfs,
                                           size_t per_device_per_sf, uint64_t seed, rffi_dataset** out);
RFFI_API rffi_status rffi_dataset_save(const rffi_dataset* dataset, const char* dir);
RFFI_API rffi_status rffi_dataset_load(const char* dir, rffi_dataset** out);
RFFI_API rffi_status rffi_dataset_augment(const rffi_dataset* dataset, double snr_min_db, double snr_max_db,
                                          int copies, uint64_t seed, rffi_dataset** out);
RFFI_API rffi_status rffi_dataset_size(const rffi_dataset* dataset, size_t* out);
RFFI_API rffi_status rffi_dataset_num_devices(const rffi_dataset* dataset, int* out);
RFFI_API rffi_status rffi_dataset_manifest_hash(const rffi_dataset* dataset, uint64_t* out);
RFFI_API void rffi_dataset_free(rffi_dataset* dataset);

/* architecture: flatten_free_cnn | lstm | gru | transformer | slicing_cnn;
 * scale: "desk" or "paper" (NULL means desk). */
RFFI_API rffi_status rffi_model_create(const char* architecture, int k_classes, const char* scale, uint64_t seed,
                                       rffi_model** out);
/* train_config_json may be NULL for defaults (online augmentation). The
 * callback, if given, runs after every epoch. */
RFFI_API rffi_status rffi_model_train(rffi_model* model, const rffi_dataset* dataset, const char* train_config_json,
                                      rffi_epoch_callback on_epoch, void* user, const char* history_csv_path);
RFFI_API rffi_status rffi_model_save(const rffi_model* model, const char* path);
RFFI_API rffi_status rffi_model_load(const char* path, rffi_model** out);
RFFI_API rffi_status rffi_model_param_count(const rffi_model* model, size_t* out);
RFFI_API rffi_status rffi_model_num_classes(const rffi_model* model, size_t* out);
/* iq holds n_samples interleaved I/Q float pairs of one synchronised
 * preamble; probs receives num_classes values. */
RFFI_API rffi_status rffi_model_infer(const rffi_model* model, const float* iq, size_t n_samples, double* probs,
                                      size_t probs_len);
RFFI_API void rffi_model_free(rffi_model* model);

/* Multi-packet fusion state for any number of streams. */
RFFI_API rffi_status rffi_history_create(size_t n_pkt, rffi_history** out);
RFFI_API rffi_status rffi_history_fuse(rffi_history* history, const char* stream_key, const double* probs, size_t k,
                                       double* fused, size_t* label);
RFFI_API void rffi_history_free(rffi_history* history);

RFFI_API rffi_status rffi_experiment_run(const char* spec_json, rffi_epoch_callback on_epoch, void* user,
                                         rffi_report** out);
RFFI_API rffi_status rffi_report_load(const char* path, rffi_report** out);
/* formats: comma-separated subset of csv,json,svg. */
RFFI_API rffi_status rffi_report_emit(const rffi_report* report, const char* dir, const char* formats);
RFFI_API rffi_status rffi_report_json(const rffi_report* report, char** out);
RFFI_API void rffi_report_free(rffi_report* report);

#ifdef __cplusplus
}
#endif

#endif

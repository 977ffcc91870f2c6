#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "rffi/rffi.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "rffi_c_api_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void count_epochs(int, double, double, double, double, void* user) { ++*static_cast<int*>(user); }

// Interleaved float32 ideal SF7 preamble (2048 samples).
std::vector<float> sf7_chirps() {
  const double pi = 3.14159265358979323846, b = 125000.0, fs_hz = 250000.0, t_sym = 128.0 / b;
  std::vector<float> out;
  for (int s = 0; s < 8; ++s) {
    for (int n = 0; n < 256; ++n) {
      const double t = n / fs_hz;
      const double ph = -pi * b * t + pi * (b / t_sym) * t * t;
      out.push_back(static_cast<float>(std::cos(ph)));
      out.push_back(static_cast<float>(std::sin(ph)));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("version and error state") {
  CHECK(std::strlen(rffi_version()) > 0);
  rffi_dataset* d = nullptr;
  CHECK(rffi_dataset_load("/nonexistent/rffi", &d) == RFFI_ERR_DATA);
  CHECK(d == nullptr);
  CHECK(std::strlen(rffi_last_error()) > 0);
  size_t n = 0;
  CHECK(rffi_dataset_size(nullptr, &n) == RFFI_ERR_USAGE);
}

TEST_CASE("dataset, model, history and report handles") {
  const fs::path dir = scratch();
  const int sfs[] = {7};
  rffi_dataset* d = nullptr;
  REQUIRE(rffi_dataset_generate(nullptr, 3, sfs, 1, 4, 5, &d) == RFFI_OK);
  CHECK(std::strlen(rffi_last_error()) == 0);
  size_t n = 0;
  int k = 0;
  uint64_t h = 0;
  CHECK(rffi_dataset_size(d, &n) == RFFI_OK);
  CHECK(n == 12);
  CHECK(rffi_dataset_num_devices(d, &k) == RFFI_OK);
  CHECK(k == 3);
  CHECK(rffi_dataset_manifest_hash(d, &h) == RFFI_OK);
  CHECK(rffi_dataset_save(d, (dir / "ds").c_str()) == RFFI_OK);

  rffi_dataset* loaded = nullptr;
  REQUIRE(rffi_dataset_load((dir / "ds").c_str(), &loaded) == RFFI_OK);
  uint64_t h2 = 0;
  rffi_dataset_manifest_hash(loaded, &h2);
  CHECK(h == h2);

  rffi_dataset* aug = nullptr;
  REQUIRE(rffi_dataset_augment(loaded, 0.0, 40.0, 2, 3, &aug) == RFFI_OK);
  rffi_dataset_size(aug, &n);
  CHECK(n == 24);
  rffi_dataset* again = nullptr;
  CHECK(rffi_dataset_augment(aug, 0.0, 40.0, 1, 3, &again) == RFFI_ERR_USAGE);
  CHECK(rffi_dataset_augment(loaded, 10.0, 0.0, 1, 3, &again) == RFFI_ERR_USAGE);

  rffi_model* m = nullptr;
  CHECK(rffi_model_create("perceptron", 3, nullptr, 1, &m) == RFFI_ERR_USAGE);
  CHECK(rffi_model_create("transformer", 1, nullptr, 1, &m) == RFFI_ERR_USAGE);
  REQUIRE(rffi_model_create("transformer", 3, "desk", 1, &m) == RFFI_OK);
  size_t params = 0, classes = 0;
  CHECK(rffi_model_param_count(m, &params) == RFFI_OK);
  CHECK(params > 0);
  CHECK(rffi_model_num_classes(m, &classes) == RFFI_OK);
  CHECK(classes == 3);

  int epochs = 0;
  const std::string hist = (dir / "history.csv").string();
  CHECK(rffi_model_train(m, loaded, R"({"max_epochs": 2, "augmentation": "online"})", count_epochs, &epochs,
                         hist.c_str()) == RFFI_OK);
  CHECK(epochs == 2);
  CHECK(fs::exists(hist));
  CHECK(rffi_model_train(m, loaded, "{not json", nullptr, nullptr, nullptr) == RFFI_ERR_USAGE);
  CHECK(rffi_model_train(m, loaded, R"({"augmentation": "sometimes"})", nullptr, nullptr, nullptr) == RFFI_ERR_USAGE);

  const std::string ckpt = (dir / "m.ckpt").string();
  CHECK(rffi_model_save(m, ckpt.c_str()) == RFFI_OK);
  rffi_model* m2 = nullptr;
  REQUIRE(rffi_model_load(ckpt.c_str(), &m2) == RFFI_OK);

  const auto iq = sf7_chirps();
  std::vector<double> p(3), p2(3);
  CHECK(rffi_model_infer(m, iq.data(), iq.size() / 2, p.data(), p.size()) == RFFI_OK);
  CHECK(rffi_model_infer(m2, iq.data(), iq.size() / 2, p2.data(), p2.size()) == RFFI_OK);
  CHECK(p == p2);
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
  CHECK(rffi_model_infer(m, iq.data(), iq.size() / 2, p.data(), 2) == RFFI_ERR_USAGE);
  CHECK(rffi_model_infer(m, iq.data(), 1000, p.data(), 3) == RFFI_ERR_USAGE);

  rffi_history* hh = nullptr;
  CHECK(rffi_history_create(0, &hh) == RFFI_ERR_USAGE);
  REQUIRE(rffi_history_create(2, &hh) == RFFI_OK);
  const double a[] = {0.2, 0.8}, b[] = {0.6, 0.4}, bad[] = {0.7, 0.7};
  double fused[2];
  size_t label = 9;
  CHECK(rffi_history_fuse(hh, "s", a, 2, fused, &label) == RFFI_OK);
  CHECK(label == 1);
  CHECK(rffi_history_fuse(hh, "s", b, 2, fused, &label) == RFFI_OK);
  CHECK(fused[0] == doctest::Approx(0.4));
  CHECK(label == 1);
  CHECK(rffi_history_fuse(hh, "t", b, 2, fused, &label) == RFFI_OK);
  CHECK(label == 0);
  CHECK(rffi_history_fuse(hh, "s", bad, 2, fused, &label) == RFFI_ERR_USAGE);
  const double three[] = {0.2, 0.3, 0.5};
  CHECK(rffi_history_fuse(hh, "s", three, 3, fused, &label) == RFFI_ERR_USAGE);

  const char* spec = R"({"experiment": "complexity", "architectures": ["transformer"], "sfs": [7, 8],
                         "complexity_runs": 2})";
  rffi_report* r = nullptr;
  REQUIRE(rffi_experiment_run(spec, nullptr, nullptr, &r) == RFFI_OK);
  CHECK(rffi_report_emit(r, (dir / "report").c_str(), "csv,json,svg") == RFFI_OK);
  CHECK(fs::exists(dir / "report" / "complexity.csv"));
  CHECK(rffi_report_emit(r, (dir / "report").c_str(), "pdf") == RFFI_ERR_USAGE);
  char* json = nullptr;
  REQUIRE(rffi_report_json(r, &json) == RFFI_OK);
  CHECK(std::string(json).find("complexity") != std::string::npos);
  rffi_string_free(json);
  rffi_report* r2 = nullptr;
  CHECK(rffi_report_load((dir / "report" / "complexity.json").c_str(), &r2) == RFFI_OK);
  CHECK(rffi_experiment_run(R"({"experiment": "nothing"})", nullptr, nullptr, &r) == RFFI_ERR_USAGE);

  rffi_report_free(r2);
  rffi_report_free(r);
  rffi_history_free(hh);
  rffi_model_free(m2);
  rffi_model_free(m);
  rffi_dataset_free(aug);
  rffi_dataset_free(loaded);
  rffi_dataset_free(d);
  rffi_dataset_free(nullptr);
  fs::remove_all(dir);
}

TEST_CASE("divergence maps to its own status") {
  const int sfs[] = {7};
  rffi_dataset* d = nullptr;
  REQUIRE(rffi_dataset_generate(nullptr, 2, sfs, 1, 3, 1, &d) == RFFI_OK);
  rffi_model* m = nullptr;
  REQUIRE(rffi_model_create("gru", 2, nullptr, 1, &m) == RFFI_OK);
  CHECK(rffi_model_train(m, d, R"({"max_epochs": 1, "augmentation": "none", "lr0": 1e300})", nullptr, nullptr,
                         nullptr) == RFFI_ERR_DIVERGED);
  rffi_model_free(m);
  rffi_dataset_free(d);
}

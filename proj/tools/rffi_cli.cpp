// Command-line front end over the C API.
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rffi/rffi.h"

namespace {

// Failing library calls propagate their status as the process exit code.
struct Failure {
  int code;
};

void check(rffi_status s, const char* what) {
  if (s != RFFI_OK) {
    std::cerr << "error: " << what << ": " << rffi_last_error() << '\n';
    throw Failure{static_cast<int>(s)};
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open " << path << '\n';
    throw Failure{RFFI_ERR_DATA};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json parse_object(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  nlohmann::json j = nlohmann::json::parse(read_text(path), nullptr, false);
  if (!j.is_object()) {
    std::cerr << "error: " << path << " does not hold a JSON object\n";
    throw Failure{RFFI_ERR_USAGE};
  }
  return j;
}

std::vector<float> read_iq(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open " << path << '\n';
    throw Failure{RFFI_ERR_DATA};
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 8 != 0) {
    std::cerr << "error: " << path << " is not a whole number of float32 I/Q pairs\n";
    throw Failure{RFFI_ERR_DATA};
  }
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i]) | (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    std::memcpy(&out[i], &u, 4);
  }
  return out;
}

void print_epoch(int epoch, double lr, double train_loss, double val_loss, double val_acc, void*) {
  std::fprintf(stderr, "epoch %3d  lr %.2e  train_loss %.4f  val_loss %.4f  val_acc %.3f\n", epoch, lr, train_loss,
               val_loss, val_acc);
}

template <class T, void (*Free)(T*)>
struct Owned {
  T* p = nullptr;
  ~Owned() { Free(p); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radio-frequency fingerprint identification toolkit"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a simulated LoRa preamble dataset");
  int devices = 10;
  std::vector<int> sfs{7, 8, 9};
  std::size_t per_sf = 500;
  std::uint64_t seed = 1;
  std::string out, population_file;
  synth->add_option("--devices", devices, "Number of simulated transmitters")->check(CLI::Range(2, 100000));
  synth->add_option("--sfs", sfs, "Spreading factors")->delimiter(',');
  synth->add_option("--per-sf", per_sf, "Packets per device per spreading factor");
  synth->add_option("--seed", seed, "Dataset seed");
  synth->add_option("--population", population_file, "JSON population recipe");
  synth->add_option("--out", out, "Output directory")->required();

  auto* augment = app.add_subcommand("augment", "Offline AWGN augmentation of a stored dataset");
  std::string dataset_dir;
  int copies = 1;
  double snr_min = 0.0, snr_max = 40.0;
  augment->add_option("--dataset", dataset_dir, "Input dataset directory")->required();
  augment->add_option("--copies", copies, "Noisy copies per record");
  augment->add_option("--snr-min", snr_min, "Lowest SNR in dB");
  augment->add_option("--snr-max", snr_max, "Highest SNR in dB");
  augment->add_option("--seed", seed, "Noise seed");
  augment->add_option("--out", out, "Output directory")->required();

  auto* trainc = app.add_subcommand("train", "Train a classifier");
  std::string arch, aug = "online", config_file, history_file, scale = "desk";
  int epochs = 0;
  trainc->add_option("--arch", arch, "flatten_free_cnn | lstm | gru | transformer | slicing_cnn")->required();
  trainc->add_option("--aug", aug, "none | offline | online")->check(CLI::IsMember({"none", "offline", "online"}));
  trainc->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  trainc->add_option("--out", out, "Checkpoint path")->required();
  trainc->add_option("--config", config_file, "JSON training config");
  trainc->add_option("--epochs", epochs, "Maximum epochs");
  trainc->add_option("--seed", seed, "Initialisation and training seed");
  trainc->add_option("--copies", copies, "Copies for offline augmentation");
  trainc->add_option("--scale", scale, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  trainc->add_option("--history", history_file, "Write the per-epoch history as CSV");

  auto* infer = app.add_subcommand("infer", "Classify synchronised preambles");
  std::string model_file, iq_file, stream_key = "default";
  std::size_t n_pkt = 1;
  int sf = 0;
  infer->add_option("--model", model_file, "Checkpoint path")->required();
  infer->add_option("--iq-file", iq_file, "Little-endian float32 interleaved I/Q, one or more preambles")->required();
  infer->add_option("--stream-key", stream_key, "Stream whose packets are fused");
  infer->add_option("--n-pkt", n_pkt, "Packets fused per decision")->check(CLI::PositiveNumber);
  infer->add_option("--sf", sf, "Spreading factor (required when the file holds several packets)");

  auto* experiment = app.add_subcommand("experiment", "Run a benchmark experiment");
  std::string kind, formats = "csv,json,svg";
  experiment->add_option("--kind", kind, "Overrides the experiment named in the config");
  experiment->add_option("--config", config_file, "JSON experiment spec");
  experiment->add_option("--out", out, "Report directory (default: output_dir from the config)");
  experiment->add_option("--formats", formats, "Comma-separated csv,json,svg");

  auto* report = app.add_subcommand("report", "Re-emit a stored report");
  std::string in_file;
  report->add_option("--in", in_file, "Report JSON")->required();
  report->add_option("--formats", formats, "Comma-separated csv,json,svg");
  report->add_option("--out", out, "Output directory (default: alongside --in)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : RFFI_ERR_USAGE;
  }

  try {
    if (*synth) {
      std::string pop_json;
      if (!population_file.empty()) pop_json = read_text(population_file);
      Owned<rffi_dataset, rffi_dataset_free> d;
      check(rffi_dataset_generate(pop_json.empty() ? nullptr : pop_json.c_str(), devices, sfs.data(), sfs.size(), per_sf,
                                  seed, &d.p),
            "synth");
      check(rffi_dataset_save(d.p, out.c_str()), "save");
      std::size_t n = 0;
      std::uint64_t h = 0;
      check(rffi_dataset_size(d.p, &n), "size");
      check(rffi_dataset_manifest_hash(d.p, &h), "hash");
      std::printf("wrote %zu records to %s (manifest %016llx)\n", n, out.c_str(), static_cast<unsigned long long>(h));
    } else if (*augment) {
      Owned<rffi_dataset, rffi_dataset_free> src, dst;
      check(rffi_dataset_load(dataset_dir.c_str(), &src.p), "load");
      check(rffi_dataset_augment(src.p, snr_min, snr_max, copies, seed, &dst.p), "augment");
      check(rffi_dataset_save(dst.p, out.c_str()), "save");
      std::size_t n = 0;
      check(rffi_dataset_size(dst.p, &n), "size");
      std::printf("wrote %zu records to %s\n", n, out.c_str());
    } else if (*trainc) {
      Owned<rffi_dataset, rffi_dataset_free> d;
      check(rffi_dataset_load(dataset_dir.c_str(), &d.p), "load");
      int k = 0;
      check(rffi_dataset_num_devices(d.p, &k), "devices");
      nlohmann::json cfg = parse_object(config_file);
      // Command-line flags override the config file.
      cfg["augmentation"] = aug;
      cfg["seed"] = seed;
      if (epochs > 0) cfg["max_epochs"] = epochs;
      if (*trainc->get_option("--copies")) cfg["offline_copies"] = copies;
      const std::string train_cfg = cfg.dump();
      Owned<rffi_model, rffi_model_free> m;
      check(rffi_model_create(arch.c_str(), k, scale.c_str(), seed, &m.p), "model");
      check(rffi_model_train(m.p, d.p, train_cfg.c_str(), print_epoch, nullptr,
                             history_file.empty() ? nullptr : history_file.c_str()),
            "train");
      check(rffi_model_save(m.p, out.c_str()), "save");
      std::printf("saved %s\n", out.c_str());
    } else if (*infer) {
      Owned<rffi_model, rffi_model_free> m;
      check(rffi_model_load(model_file.c_str(), &m.p), "load model");
      std::size_t k = 0;
      check(rffi_model_num_classes(m.p, &k), "classes");
      const std::vector<float> iq = read_iq(iq_file);
      const std::size_t total = iq.size() / 2;
      std::size_t per_packet = total;
      if (sf > 0) per_packet = std::size_t{16} << sf;  // 8 symbols x 2^sf chips x 2 samples
      if (per_packet == 0 || total % per_packet != 0) {
        std::cerr << "error: " << total << " samples is not a whole number of SF" << sf << " preambles\n";
        return RFFI_ERR_DATA;
      }
      Owned<rffi_history, rffi_history_free> h;
      check(rffi_history_create(n_pkt, &h.p), "history");
      std::vector<double> p(k), fused(k);
      for (std::size_t start = 0, idx = 0; start < total; start += per_packet, ++idx) {
        check(rffi_model_infer(m.p, iq.data() + 2 * start, per_packet, p.data(), k), "infer");
        std::size_t label = 0;
        check(rffi_history_fuse(h.p, stream_key.c_str(), p.data(), k, fused.data(), &label), "fuse");
        std::size_t single = 0;
        for (std::size_t i = 1; i < k; ++i) {
          if (p[i] > p[single]) single = i;
        }
        std::printf("packet %zu: device %zu (p=%.4f)  fused[%s]: device %zu (p=%.4f)\n", idx, single, p[single],
                    stream_key.c_str(), label, fused[label]);
      }
    } else if (*experiment) {
      if (config_file.empty() && kind.empty()) {
        std::cerr << "error: experiment needs --config or --kind\n";
        return RFFI_ERR_USAGE;
      }
      nlohmann::json spec = parse_object(config_file);
      if (!kind.empty()) spec["experiment"] = kind;
      std::string dir = out;
      if (dir.empty()) dir = spec.value("output_dir", std::string());
      if (dir.empty()) dir = ".";
      Owned<rffi_report, rffi_report_free> r;
      check(rffi_experiment_run(spec.dump().c_str(), print_epoch, nullptr, &r.p), "experiment");
      check(rffi_report_emit(r.p, dir.c_str(), formats.c_str()), "emit");
      std::printf("report written to %s\n", dir.c_str());
    } else if (*report) {
      Owned<rffi_report, rffi_report_free> r;
      check(rffi_report_load(in_file.c_str(), &r.p), "load report");
      std::string dir = out;
      if (dir.empty()) {
        const auto slash = in_file.find_last_of('/');
        dir = slash == std::string::npos ? "." : in_file.substr(0, slash);
      }
      check(rffi_report_emit(r.p, dir.c_str(), formats.c_str()), "emit");
      std::printf("report written to %s\n", dir.c_str());
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}

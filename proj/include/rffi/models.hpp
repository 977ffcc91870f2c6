#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rffi/dsp.hpp"
#include "rffi/tensornet/layers.hpp"

namespace rffi {

enum class Architecture { FlattenFreeCnn, LstmNet, GruNet, Transformer, SlicingCnn };
enum class Scale { Paper, Desk };

std::string_view to_string(Architecture a);
Architecture architecture_from_string(std::string_view s);
std::string_view to_string(Scale s);
Scale scale_from_string(std::string_view s);

/// The four architectures that accept any spectrogram width.
inline constexpr std::array<Architecture, 4> kLengthVersatile{Architecture::FlattenFreeCnn, Architecture::LstmNet,
                                                              Architecture::GruNet, Architecture::Transformer};

struct CnnHyper {
  std::array<std::size_t, 10> channels{32, 32, 64, 64, 64, 128, 128, 128, 128, 128};
  std::size_t kernel = 3;
  /// conv7 -> conv9 projection skip; off by default.
  bool second_skip = false;
};

struct RecurrentHyper {
  std::size_t units = 256;
};

struct TransformerHyper {
  std::size_t heads = 4;
  std::size_t ffn_hidden = 128;
  std::size_t blocks = 2;
};

struct ModelSpec {
  Architecture architecture = Architecture::FlattenFreeCnn;
  std::size_t k_classes = 10;
  Scale scale = Scale::Desk;
  /// Spectrogram height (STFT window length).
  std::size_t input_height = 64;
  /// Fixed width the slicing CNN's flatten head is built for.
  std::size_t slice_width = 6;
  CnnHyper cnn;
  RecurrentHyper recurrent;
  TransformerHyper transformer;

  /// Defaults for the given scale: desk divides CNN channels by 4 and uses
  /// 64 recurrent units.
  static ModelSpec make(Architecture a, std::size_t k_classes, Scale scale = Scale::Desk);
  void validate() const;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

/// Probability vector over K devices.
class ProbVector {
 public:
  ProbVector() = default;
  explicit ProbVector(std::vector<double> p) : values_(std::move(p)) {}
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const noexcept { return values_; }
  /// Index of the largest entry; ties go to the lowest index.
  std::size_t argmax() const;
  /// Nonnegative entries summing to 1 within `tol`.
  bool valid(double tol = 1e-6) const;

 private:
  std::vector<double> values_;
};

/// Classifier body plus head. Input is the standardised spectrogram as a
/// [height, width] tensor (rows are frequency bins).
template <class T>
class Network {
 public:
  virtual ~Network() = default;
  /// Activations that reach the pooling/flatten stage: [H', W', C] for the
  /// CNNs, [T, features] for the sequence models.
  virtual tn::Tensor<T> feature_maps(const tn::Tensor<T>& input) const = 0;
  virtual tn::Tensor<T> logits(const tn::Tensor<T>& input) const = 0;
  tn::ParameterRefs<T>& parameters() { return params_; }
  const tn::ParameterRefs<T>& parameters() const { return params_; }

 protected:
  tn::ParameterRefs<T> params_;
};

template <class T>
std::unique_ptr<Network<T>> build_network(const ModelSpec& spec, std::uint64_t seed);

struct TrainingMetadata {
  int epochs = 0;
  double final_val_loss = std::numeric_limits<double>::quiet_NaN();
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
  std::string augmentation = "untrained";
  std::uint64_t seed = 0;
};

/// Float32 network with its spec and training provenance.
struct TrainedModel {
  ModelSpec spec;
  std::uint64_t init_seed = 0;
  std::unique_ptr<Network<float>> net;
  TrainingMetadata training;

  std::vector<std::vector<float>> snapshot() const;
  void restore(const std::vector<std::vector<float>>& values);
};

TrainedModel build_model(const ModelSpec& spec, std::uint64_t seed);
TrainedModel build_flatten_free_cnn(const ModelSpec& spec, std::uint64_t seed);
TrainedModel build_lstm_net(const ModelSpec& spec, std::uint64_t seed);
TrainedModel build_gru_net(const ModelSpec& spec, std::uint64_t seed);
TrainedModel build_transformer(const ModelSpec& spec, std::uint64_t seed);
TrainedModel build_slicing_cnn(const ModelSpec& spec, std::uint64_t seed);

/// Standardised spectrogram as a [rows, cols] tensor.
template <class T>
tn::Tensor<T> spectrogram_tensor(const Spectrogram& s);

/// Deterministic inference; SlicingCnn rejects anything but height x slice_width.
ProbVector forward(const TrainedModel& model, const Spectrogram& spectrogram);

std::size_t param_count(const TrainedModel& model);
template <class T>
std::size_t param_count(const Network<T>& net);

/// Checkpoint bytes: "RFFICKP1", uint64 LE header length, JSON header, then
/// each parameter as little-endian float32 in header order.
std::string serialize_checkpoint(const TrainedModel& model);
TrainedModel deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace rffi

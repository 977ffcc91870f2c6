#include "rffi/models.hpp"

#include <algorithm>
#include <cmath>

#include "rffi/errors.hpp"

namespace rffi {

namespace {

using tn::Tensor;

template <class T>
Tensor<T> pad_width_to_even(const Tensor<T>& x) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (w % 2 == 0) return x;
  // [H, W, C] viewed as [H, W*C]; one extra zero pixel per row.
  const Tensor<T> rows = tn::reshape(x, {h, w * c});
  const Tensor<T> padded = tn::concat_cols<T>({rows, Tensor<T>::zeros({h, c})});
  return tn::reshape(padded, {h, w + 1, c});
}

/// Ten same-padded 3x3 convolutions, one 2x2 max pool after conv2 and a 1x1
/// projection of conv5's output added to conv7's pre-activation.
template <class T>
class CnnBody {
 public:
  CnnBody(const CnnHyper& hp, RngStream& rng, tn::ParameterRefs<T>& params) : second_skip_(hp.second_skip) {
    std::size_t in = 1;
    for (std::size_t i = 0; i < hp.channels.size(); ++i) {
      convs_[i] = tn::Conv2d<T>("conv" + std::to_string(i + 1), hp.kernel, hp.kernel, in, hp.channels[i], rng);
      in = hp.channels[i];
    }
    skip_ = tn::Conv2d<T>("skip5_7", 1, 1, hp.channels[4], hp.channels[6], rng);
    if (second_skip_) skip2_ = tn::Conv2d<T>("skip7_9", 1, 1, hp.channels[6], hp.channels[8], rng);
    for (auto& c : convs_) c.collect(params);
    skip_.collect(params);
    if (second_skip_) skip2_.collect(params);
  }

  Tensor<T> operator()(const Tensor<T>& input) const {
    if (input.rank() != 2) throw InvalidArgument("CNN expects a [height, width] spectrogram");
    if (input.dim(0) % 2 != 0) throw InvalidArgument("CNN input height must be even");
    Tensor<T> x = tn::reshape(input, {input.dim(0), input.dim(1), 1});
    x = tn::relu(convs_[0](x));
    x = tn::relu(convs_[1](x));
    x = tn::max_pool2d(pad_width_to_even(x));
    x = tn::relu(convs_[2](x));
    x = tn::relu(convs_[3](x));
    const Tensor<T> a5 = tn::relu(convs_[4](x));
    x = tn::relu(convs_[5](a5));
    const Tensor<T> a7 = tn::relu(tn::add(convs_[6](x), skip_(a5)));
    x = tn::relu(convs_[7](a7));
    Tensor<T> z9 = convs_[8](x);
    if (second_skip_) z9 = tn::add(z9, skip2_(a7));
    x = tn::relu(z9);
    return tn::relu(convs_[9](x));
  }

 private:
  std::array<tn::Conv2d<T>, 10> convs_;
  tn::Conv2d<T> skip_;
  tn::Conv2d<T> skip2_;
  bool second_skip_;
};

template <class T>
class FlattenFreeCnn final : public Network<T> {
 public:
  FlattenFreeCnn(const ModelSpec& spec, RngStream& rng)
      : body_(spec.cnn, rng, this->params_),
        head_("head", spec.cnn.channels.back(), spec.k_classes, rng, tn::InitScheme::HeadUniform) {
    head_.collect(this->params_);
  }
  Tensor<T> feature_maps(const Tensor<T>& input) const override { return body_(input); }
  Tensor<T> logits(const Tensor<T>& input) const override {
    return head_(tn::global_avg_pool2d(feature_maps(input)));
  }

 private:
  CnnBody<T> body_;
  tn::Dense<T> head_;
};

template <class T>
class SlicingCnn final : public Network<T> {
 public:
  SlicingCnn(const ModelSpec& spec, RngStream& rng)
      : height_(spec.input_height),
        width_(spec.slice_width),
        body_(spec.cnn, rng, this->params_),
        head_("head", (spec.input_height / 2) * ((spec.slice_width + 1) / 2) * spec.cnn.channels.back(),
              spec.k_classes, rng, tn::InitScheme::HeadUniform) {
    head_.collect(this->params_);
  }
  Tensor<T> feature_maps(const Tensor<T>& input) const override { return body_(input); }
  Tensor<T> logits(const Tensor<T>& input) const override {
    if (input.rank() != 2 || input.dim(0) != height_ || input.dim(1) != width_) {
      throw DimensionMismatch("slicing CNN is built for " + std::to_string(height_) + "x" + std::to_string(width_) +
                              " inputs but received " + tn::to_string(input.shape()) +
                              "; its flatten + dense head fixes the input length");
    }
    const Tensor<T> maps = feature_maps(input);
    return head_(tn::reshape(maps, {maps.size()}));
  }

 private:
  std::size_t height_;
  std::size_t width_;
  CnnBody<T> body_;
  tn::Dense<T> head_;
};

template <class T>
class RecurrentNet final : public Network<T> {
 public:
  RecurrentNet(const ModelSpec& spec, tn::CellKind kind, RngStream& rng) {
    const std::string prefix = kind == tn::CellKind::Lstm ? "lstm" : "gru";
    first_ = tn::Recurrent<T>(prefix + "1", kind, spec.input_height, spec.recurrent.units, rng);
    second_ = tn::Recurrent<T>(prefix + "2", kind, spec.recurrent.units, spec.recurrent.units, rng);
    head_ = tn::Dense<T>("head", spec.recurrent.units, spec.k_classes, rng, tn::InitScheme::HeadUniform);
    first_.collect(this->params_);
    second_.collect(this->params_);
    head_.collect(this->params_);
  }
  Tensor<T> feature_maps(const Tensor<T>& input) const override {
    return second_(first_(tn::transpose(input)));
  }
  Tensor<T> logits(const Tensor<T>& input) const override {
    return head_(tn::global_avg_pool1d(feature_maps(input)));
  }

 private:
  tn::Recurrent<T> first_;
  tn::Recurrent<T> second_;
  tn::Dense<T> head_;
};

template <class T>
class TransformerNet final : public Network<T> {
 public:
  TransformerNet(const ModelSpec& spec, RngStream& rng) : d_(spec.input_height) {
    for (std::size_t b = 0; b < spec.transformer.blocks; ++b) {
      const std::string p = "block" + std::to_string(b + 1);
      Block blk{tn::MultiHeadAttention<T>(p + ".mha", d_, spec.transformer.heads, rng),
                tn::LayerNorm<T>(p + ".norm1", d_),
                tn::Dense<T>(p + ".ffn1", d_, spec.transformer.ffn_hidden, rng, tn::InitScheme::HeUniform),
                tn::Dense<T>(p + ".ffn2", spec.transformer.ffn_hidden, d_, rng),
                tn::LayerNorm<T>(p + ".norm2", d_)};
      blocks_.push_back(std::move(blk));
    }
    head_ = tn::Dense<T>("head", d_, spec.k_classes, rng, tn::InitScheme::HeadUniform);
    for (auto& b : blocks_) {
      b.attention.collect(this->params_);
      b.norm1.collect(this->params_);
      b.ffn1.collect(this->params_);
      b.ffn2.collect(this->params_);
      b.norm2.collect(this->params_);
    }
    head_.collect(this->params_);
  }

  Tensor<T> feature_maps(const Tensor<T>& input) const override {
    const Tensor<T> seq = tn::transpose(input);
    Tensor<T> x = tn::add(seq, tn::sinusoidal_position_encoding<T>(seq.dim(0), d_));
    for (const Block& b : blocks_) {
      x = b.norm1(tn::add(x, b.attention(x)));
      x = b.norm2(tn::add(x, b.ffn2(tn::relu(b.ffn1(x)))));
    }
    return x;
  }
  Tensor<T> logits(const Tensor<T>& input) const override {
    return head_(tn::global_avg_pool1d(feature_maps(input)));
  }

 private:
  struct Block {
    tn::MultiHeadAttention<T> attention;
    tn::LayerNorm<T> norm1;
    tn::Dense<T> ffn1;
    tn::Dense<T> ffn2;
    tn::LayerNorm<T> norm2;
  };
  std::size_t d_;
  std::vector<Block> blocks_;
  tn::Dense<T> head_;
};

constexpr std::pair<Architecture, std::string_view> kArchNames[] = {
    {Architecture::FlattenFreeCnn, "flatten_free_cnn"}, {Architecture::LstmNet, "lstm"},
    {Architecture::GruNet, "gru"},                       {Architecture::Transformer, "transformer"},
    {Architecture::SlicingCnn, "slicing_cnn"}};

}  // namespace

std::string_view to_string(Architecture a) {
  for (const auto& [arch, name] : kArchNames) {
    if (arch == a) return name;
  }
  return "unknown";
}

Architecture architecture_from_string(std::string_view s) {
  for (const auto& [arch, name] : kArchNames) {
    if (name == s) return arch;
  }
  if (s == "cnn") return Architecture::FlattenFreeCnn;
  if (s == "slicing") return Architecture::SlicingCnn;
  throw InvalidArgument("unknown architecture '" + std::string(s) + "'");
}

std::string_view to_string(Scale s) { return s == Scale::Paper ? "paper" : "desk"; }

Scale scale_from_string(std::string_view s) {
  if (s == "paper") return Scale::Paper;
  if (s == "desk") return Scale::Desk;
  throw InvalidArgument("unknown scale '" + std::string(s) + "'");
}

ModelSpec ModelSpec::make(Architecture a, std::size_t k, Scale s) {
  ModelSpec spec;
  spec.architecture = a;
  spec.k_classes = k;
  spec.scale = s;
  if (s == Scale::Desk) {
    for (auto& c : spec.cnn.channels) c /= 4;
    spec.recurrent.units = 64;
  }
  spec.validate();
  return spec;
}

void ModelSpec::validate() const {
  if (k_classes < 2) throw InvalidArgument("a classifier needs at least two classes");
  if (input_height == 0 || input_height % 2 != 0) throw InvalidArgument("input height must be even and positive");
  for (std::size_t c : cnn.channels) {
    if (c == 0) throw InvalidArgument("CNN channel counts must be positive");
  }
  if (cnn.kernel % 2 == 0) throw InvalidArgument("CNN kernel must be odd");
  if (recurrent.units == 0) throw InvalidArgument("recurrent units must be positive");
  if (transformer.heads == 0 || input_height % transformer.heads != 0) {
    throw InvalidArgument("model width must be divisible by the head count");
  }
  if (slice_width == 0) throw InvalidArgument("slice width must be positive");
}

nlohmann::json to_json(const ModelSpec& s) {
  return {{"architecture", std::string(to_string(s.architecture))},
          {"k_classes", s.k_classes},
          {"scale", std::string(to_string(s.scale))},
          {"input_height", s.input_height},
          {"slice_width", s.slice_width},
          {"cnn", {{"channels", s.cnn.channels}, {"kernel", s.cnn.kernel}, {"second_skip", s.cnn.second_skip}}},
          {"recurrent", {{"units", s.recurrent.units}}},
          {"transformer",
           {{"heads", s.transformer.heads},
            {"ffn_hidden", s.transformer.ffn_hidden},
            {"blocks", s.transformer.blocks}}}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  try {
    ModelSpec s = ModelSpec::make(architecture_from_string(j.at("architecture").get<std::string>()),
                                  j.at("k_classes").get<std::size_t>(),
                                  scale_from_string(j.value("scale", std::string("desk"))));
    s.input_height = j.value("input_height", s.input_height);
    s.slice_width = j.value("slice_width", s.slice_width);
    if (j.contains("cnn")) {
      const auto& c = j.at("cnn");
      if (c.contains("channels")) s.cnn.channels = c.at("channels").get<std::array<std::size_t, 10>>();
      s.cnn.kernel = c.value("kernel", s.cnn.kernel);
      s.cnn.second_skip = c.value("second_skip", s.cnn.second_skip);
    }
    if (j.contains("recurrent")) s.recurrent.units = j.at("recurrent").value("units", s.recurrent.units);
    if (j.contains("transformer")) {
      const auto& t = j.at("transformer");
      s.transformer.heads = t.value("heads", s.transformer.heads);
      s.transformer.ffn_hidden = t.value("ffn_hidden", s.transformer.ffn_hidden);
      s.transformer.blocks = t.value("blocks", s.transformer.blocks);
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model spec: ") + e.what());
  }
}

std::size_t ProbVector::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values_.size(); ++i) {
    if (values_[i] > values_[best]) best = i;
  }
  return best;
}

bool ProbVector::valid(double tol) const {
  if (values_.empty()) return false;
  double total = 0.0;
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    total += v;
  }
  return std::abs(total - 1.0) <= tol;
}

template <class T>
std::unique_ptr<Network<T>> build_network(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  RngStream rng(seed);
  switch (spec.architecture) {
    case Architecture::FlattenFreeCnn:
      return std::make_unique<FlattenFreeCnn<T>>(spec, rng);
    case Architecture::SlicingCnn:
      return std::make_unique<SlicingCnn<T>>(spec, rng);
    case Architecture::LstmNet:
      return std::make_unique<RecurrentNet<T>>(spec, tn::CellKind::Lstm, rng);
    case Architecture::GruNet:
      return std::make_unique<RecurrentNet<T>>(spec, tn::CellKind::Gru, rng);
    case Architecture::Transformer:
      return std::make_unique<TransformerNet<T>>(spec, rng);
  }
  throw InvalidArgument("unsupported architecture");
}

std::vector<std::vector<float>> TrainedModel::snapshot() const {
  std::vector<std::vector<float>> out;
  for (const auto* p : net->parameters()) out.emplace_back(p->tensor.data().begin(), p->tensor.data().end());
  return out;
}

void TrainedModel::restore(const std::vector<std::vector<float>>& values) {
  auto& params = net->parameters();
  if (values.size() != params.size()) throw InvalidArgument("snapshot does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i]->tensor.mutable_data();
    if (dst.size() != values[i].size()) throw InvalidArgument("snapshot tensor size mismatch");
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

TrainedModel build_model(const ModelSpec& spec, std::uint64_t seed) {
  TrainedModel m;
  m.spec = spec;
  m.init_seed = seed;
  m.net = build_network<float>(spec, seed);
  return m;
}

namespace {
TrainedModel build_checked(const ModelSpec& spec, Architecture expected, std::uint64_t seed) {
  if (spec.architecture != expected) {
    throw InvalidArgument("spec describes " + std::string(to_string(spec.architecture)) + ", expected " +
                          std::string(to_string(expected)));
  }
  return build_model(spec, seed);
}
}  // namespace

TrainedModel build_flatten_free_cnn(const ModelSpec& spec, std::uint64_t seed) {
  return build_checked(spec, Architecture::FlattenFreeCnn, seed);
}
TrainedModel build_lstm_net(const ModelSpec& spec, std::uint64_t seed) {
  return build_checked(spec, Architecture::LstmNet, seed);
}
TrainedModel build_gru_net(const ModelSpec& spec, std::uint64_t seed) {
  return build_checked(spec, Architecture::GruNet, seed);
}
TrainedModel build_transformer(const ModelSpec& spec, std::uint64_t seed) {
  return build_checked(spec, Architecture::Transformer, seed);
}
TrainedModel build_slicing_cnn(const ModelSpec& spec, std::uint64_t seed) {
  return build_checked(spec, Architecture::SlicingCnn, seed);
}

template <class T>
tn::Tensor<T> spectrogram_tensor(const Spectrogram& s) {
  const std::vector<float> input = to_model_input(s);
  return tn::Tensor<T>::constant({s.rows, s.cols}, std::vector<T>(input.begin(), input.end()));
}

ProbVector forward(const TrainedModel& model, const Spectrogram& spectrogram) {
  if (spectrogram.rows != model.spec.input_height) {
    throw DimensionMismatch("model expects spectrogram height " + std::to_string(model.spec.input_height) + ", got " +
                            std::to_string(spectrogram.rows));
  }
  tn::NoGradGuard no_grad;
  const tn::Tensor<float> z = model.net->logits(spectrogram_tensor<float>(spectrogram));
  const std::vector<float> p = tn::softmax<float>(z.data());
  return ProbVector(std::vector<double>(p.begin(), p.end()));
}

template <class T>
std::size_t param_count(const Network<T>& net) {
  std::size_t n = 0;
  for (const auto* p : net.parameters()) n += p->size();
  return n;
}

std::size_t param_count(const TrainedModel& model) { return param_count(*model.net); }

template std::unique_ptr<Network<float>> build_network<float>(const ModelSpec&, std::uint64_t);
template std::unique_ptr<Network<double>> build_network<double>(const ModelSpec&, std::uint64_t);
template tn::Tensor<float> spectrogram_tensor<float>(const Spectrogram&);
template tn::Tensor<double> spectrogram_tensor<double>(const Spectrogram&);
template std::size_t param_count<float>(const Network<float>&);
template std::size_t param_count<double>(const Network<double>&);

}  // namespace rffi

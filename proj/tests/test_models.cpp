#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "rffi/errors.hpp"
#include "rffi/models.hpp"
#include "rffi/tensornet/optim.hpp"

using namespace rffi;

namespace {

Spectrogram random_spectrogram(std::size_t cols, std::uint64_t seed, std::size_t rows = 64) {
  RngStream rng(seed);
  Spectrogram s{rows, cols, std::vector<float>(rows * cols)};
  for (float& v : s.values) v = static_cast<float>(10.0 * rng.normal());
  return s;
}

// Zero biases put whole patches exactly on a ReLU kink, where finite
// differences are meaningless; random biases move them off it.
void randomize_biases(Network<double>& net, std::uint64_t seed) {
  RngStream rng(seed);
  for (auto* p : net.parameters()) {
    if (p->name.ends_with("bias")) {
      for (double& b : p->tensor.mutable_data()) b = 0.1 * rng.normal();
    }
  }
}

std::size_t count(const TrainedModel& m) { return param_count(m); }

TrainedModel make(Architecture a, Scale s = Scale::Desk, std::size_t k = 10, std::uint64_t seed = 1) {
  return build_model(ModelSpec::make(a, k, s), seed);
}

const Architecture kAll[] = {Architecture::FlattenFreeCnn, Architecture::LstmNet, Architecture::GruNet,
                             Architecture::Transformer, Architecture::SlicingCnn};

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("layer parameter formulas") {
    RngStream rng(1);
    tn::Dense<float> d("d", 128, 10, rng);
    CHECK(d.weight.size() + d.bias.size() == 1290);
    tn::Recurrent<float> lstm("l", tn::CellKind::Lstm, 64, 256, rng);
    CHECK(lstm.input_weight.size() + lstm.recurrent_weight.size() + lstm.bias.size() == 328704);
  }

  TEST_CASE("full-scale parameter counts") {
    const std::size_t cnn = count(make(Architecture::FlattenFreeCnn, Scale::Paper));
    const std::size_t lstm = count(make(Architecture::LstmNet, Scale::Paper));
    const std::size_t gru = count(make(Architecture::GruNet, Scale::Paper));
    const std::size_t tf = count(make(Architecture::Transformer, Scale::Paper));
    const std::size_t slicing = count(make(Architecture::SlicingCnn, Scale::Paper));
    MESSAGE("cnn " << cnn << " lstm " << lstm << " gru " << gru << " transformer " << tf << " slicing " << slicing);
    // Two recurrent layers of 256 units on 64 features plus a 256 -> 10 head.
    CHECK(lstm == 328704 + 4 * ((256 + 256) * 256 + 256) + 2570);
    CHECK(lstm == 856586);
    CHECK(gru == 644618);
    CHECK(gru < lstm);
    CHECK(tf < gru);
    CHECK(gru < cnn);
    CHECK(cnn < slicing);
    for (Architecture a : kAll) {
      if (a == Architecture::Transformer) {
        CHECK(count(make(a, Scale::Paper)) == count(make(a, Scale::Desk)));
      } else {
        CHECK(count(make(a, Scale::Paper)) > count(make(a, Scale::Desk)));
      }
    }
  }

  TEST_CASE("param_count is architecture-deterministic") {
    for (Architecture a : kAll) {
      CHECK(count(make(a, Scale::Desk, 10, 1)) == count(make(a, Scale::Desk, 10, 2)));
    }
  }

  TEST_CASE("pre-pooling shapes") {
    const auto sf7 = random_spectrogram(62, 1);
    const auto cnn = make(Architecture::FlattenFreeCnn, Scale::Paper);
    CHECK(cnn.net->feature_maps(spectrogram_tensor<float>(sf7)).shape() == tn::Shape{32, 31, 128});
    const auto lstm = make(Architecture::LstmNet, Scale::Paper);
    CHECK(lstm.net->feature_maps(spectrogram_tensor<float>(sf7)).shape() == tn::Shape{62, 256});
    const auto tf = make(Architecture::Transformer, Scale::Paper);
    CHECK(tf.net->feature_maps(spectrogram_tensor<float>(sf7)).shape() == tn::Shape{62, 64});
    CHECK(tf.net->feature_maps(spectrogram_tensor<float>(random_spectrogram(254, 2))).shape() == tn::Shape{254, 64});
  }

  TEST_CASE("length versatility") {
    for (Architecture a : kLengthVersatile) {
      CAPTURE(to_string(a));
      const auto m = make(a);
      const std::size_t before = count(m);
      for (std::size_t w : {62u, 126u, 254u, 8u, 9u, 31u, 1u}) {
        CAPTURE(w);
        const auto p = forward(m, random_spectrogram(w, w));
        CHECK(p.size() == 10);
        CHECK(p.valid(1e-6));
      }
      CHECK(count(m) == before);
    }
  }

  TEST_CASE("slicing CNN fixes its input width") {
    const auto m = make(Architecture::SlicingCnn);
    const auto p = forward(m, random_spectrogram(6, 3));
    CHECK(p.size() == 10);
    CHECK(p.valid(1e-6));
    for (std::size_t w : {62u, 5u, 7u, 126u}) CHECK_THROWS_AS(forward(m, random_spectrogram(w, 4)), DimensionMismatch);
    CHECK_THROWS_AS(forward(m, random_spectrogram(6, 4, 32)), DimensionMismatch);
  }

  TEST_CASE("forward is deterministic") {
    for (Architecture a : kAll) {
      const auto m = make(a);
      const auto s = random_spectrogram(a == Architecture::SlicingCnn ? 6 : 62, 5);
      CHECK(forward(m, s).values() == forward(m, s).values());
    }
  }

  TEST_CASE("untrained models are near uniform") {
    for (Architecture a : kAll) {
      CAPTURE(to_string(a));
      const int inits = a == Architecture::FlattenFreeCnn ? 100 : 20;
      double lo = 1.0, hi = 0.0;
      for (int i = 0; i < inits; ++i) {
        const auto m = make(a, Scale::Desk, 10, 1000 + i);
        const auto p = forward(m, random_spectrogram(a == Architecture::SlicingCnn ? 6 : 62, 77 + i));
        for (double v : p.values()) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      CHECK(lo >= 0.02);
      CHECK(hi <= 0.3);
    }
  }

  TEST_CASE("ProbVector") {
    CHECK(ProbVector({0.2, 0.5, 0.3}).argmax() == 1);
    CHECK(ProbVector({0.4, 0.4, 0.2}).argmax() == 0);
    CHECK(ProbVector({0.2, 0.4, 0.4}).argmax() == 1);
    CHECK(ProbVector({0.5, 0.5}).valid());
    CHECK_FALSE(ProbVector({0.5, 0.6}).valid());
    CHECK_FALSE(ProbVector({1.2, -0.2}).valid());
  }

  TEST_CASE("CNN gradient check on a 64x62 input") {
    ModelSpec spec = ModelSpec::make(Architecture::FlattenFreeCnn, 4);
    spec.cnn.channels = {2, 2, 2, 2, 2, 3, 2, 2, 2, 3};
    spec.cnn.second_skip = true;
    auto net = build_network<double>(spec, 11);
    randomize_biases(*net, 13);
    auto x = spectrogram_tensor<double>(random_spectrogram(62, 12));
    const auto r = tn::grad_check([&] { return tn::softmax_cross_entropy(net->logits(x), 2).loss; }, net->parameters(),
                                  {1e-5, 12, 1e-6});
    MESSAGE("checked " << r.checked << ", worst " << r.worst_parameter << ", step reductions " << r.step_reductions);
    CHECK(r.passed(1e-4));
  }

  TEST_CASE("sequence model gradient checks") {
    for (Architecture a : {Architecture::LstmNet, Architecture::GruNet, Architecture::Transformer,
                           Architecture::SlicingCnn}) {
      CAPTURE(to_string(a));
      ModelSpec spec = ModelSpec::make(a, 3);
      spec.input_height = 8;
      spec.recurrent.units = 4;
      spec.transformer.heads = 2;
      spec.transformer.ffn_hidden = 6;
      spec.cnn.channels = {2, 2, 2, 2, 2, 2, 2, 2, 2, 2};
      auto net = build_network<double>(spec, 21);
      randomize_biases(*net, 23);
      auto x = spectrogram_tensor<double>(random_spectrogram(a == Architecture::SlicingCnn ? 6 : 7, 22, 8));
      const auto r = tn::grad_check([&] { return tn::softmax_cross_entropy(net->logits(x), 1).loss; },
                                    net->parameters(), {1e-5, 16, 1e-6});
      CHECK(r.max_relative_error < 1e-4);
    }
  }

  TEST_CASE("checkpoint round trip is byte exact") {
    const auto dir = std::filesystem::temp_directory_path() / "rffi_models_test";
    std::filesystem::create_directories(dir);
    for (Architecture a : kAll) {
      auto m = make(a, Scale::Desk, 7, 3);
      m.training.epochs = 4;
      m.training.augmentation = "online";
      const std::string bytes = serialize_checkpoint(m);
      const auto back = deserialize_checkpoint(bytes);
      CHECK(serialize_checkpoint(back) == bytes);
      CHECK(back.snapshot() == m.snapshot());
      CHECK(back.spec.k_classes == 7);
      CHECK(back.training.epochs == 4);
      const auto s = random_spectrogram(a == Architecture::SlicingCnn ? 6 : 30, 9);
      CHECK(forward(back, s).values() == forward(m, s).values());

      const auto path = (dir / (std::string(to_string(a)) + ".ckpt")).string();
      save_checkpoint(m, path);
      CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
    }
    const std::string good = serialize_checkpoint(make(Architecture::GruNet));
    CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, good.size() - 3)), DataError);
    CHECK_THROWS_AS(deserialize_checkpoint("NOTACKPT"), DataError);
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), DataError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("spec parsing") {
    CHECK(architecture_from_string("lstm") == Architecture::LstmNet);
    CHECK_THROWS_AS(architecture_from_string("mlp"), InvalidArgument);
    CHECK_THROWS_AS(scale_from_string("huge"), InvalidArgument);
    for (Architecture a : kAll) {
      const auto spec = ModelSpec::make(a, 5, Scale::Paper);
      CHECK(to_json(model_spec_from_json(to_json(spec))) == to_json(spec));
    }
  }
}

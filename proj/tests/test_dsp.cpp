#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "rffi/channel.hpp"
#include "rffi/dsp.hpp"
#include "rffi/errors.hpp"
#include "rffi/impairment.hpp"

using namespace rffi;

namespace {

ComplexSignal rotate(const ComplexSignal& x, double hz) {
  DeviceProfile p = identity_profile();
  p.cfo_hz = hz;
  RngStream rng(0);
  return apply_impairments(x, p, rng, false, x.size());
}

ComplexSignal embed(const ComplexSignal& x, std::size_t offset, std::size_t total) {
  ComplexSignal buf{std::vector<cplx>(total), x.sample_rate_hz};
  std::copy(x.samples.begin(), x.samples.end(), buf.samples.begin() + static_cast<std::ptrdiff_t>(offset));
  return buf;
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("sync on noiseless embeddings") {
    const auto cfg = LoRaConfig::make(7);
    const auto x = synth_preamble(cfg);
    for (std::size_t off : {0u, 1u, 100u, 377u, 1000u}) {
      const auto found = detect_and_sync(embed(x, off, x.size() + 1200), cfg);
      REQUIRE(found.has_value());
      CHECK(*found == off);
    }
  }

  TEST_CASE("sync at 0 dB") {
    const auto cfg = LoRaConfig::make(7);
    const auto x = synth_preamble(cfg);
    int good = 0;
    for (int t = 0; t < 200; ++t) {
      RngStream rng(derive_seed(3, {static_cast<std::uint64_t>(t)}));
      auto buf = embed(x, 100, x.size() + 400);
      for (auto& v : buf.samples) v += rng.complex_normal(1.0);
      const auto found = detect_and_sync(buf, cfg);
      if (found && std::abs(static_cast<long>(*found) - 100) <= 1) ++good;
    }
    CHECK(good >= 190);
  }

  TEST_CASE("pure noise is not detected") {
    const auto cfg = LoRaConfig::make(7);
    int false_alarms = 0;
    for (int t = 0; t < 20; ++t) {
      RngStream rng(derive_seed(4, {static_cast<std::uint64_t>(t)}));
      ComplexSignal buf{std::vector<cplx>(4096), cfg.sample_rate_hz};
      for (auto& v : buf.samples) v = rng.complex_normal(1.0);
      if (detect_and_sync(buf, cfg)) ++false_alarms;
    }
    CHECK(false_alarms == 0);
  }

  TEST_CASE("CFO estimation") {
    const auto cfg7 = LoRaConfig::make(7);
    const auto x = synth_preamble(cfg7);
    CHECK(std::abs(estimate_cfo(rotate(x, 100.0), cfg7) - 100.0) < 0.1);

    // Phase-estimate standard deviation of the lag-L correlator, converted to Hz.
    const double pairs = static_cast<double>(x.size() - 256);
    const double sigma_hz = std::sqrt(2.0 * std::pow(10.0, -3.0) / pairs) * x.sample_rate_hz / (2.0 * std::numbers::pi * 256.0);
    RngStream rng(8);
    CHECK(std::abs(estimate_cfo(add_awgn(x, 30.0, rng), cfg7)) < 5.0 * sigma_hz);

    // SF9: |cfo| beyond 1/(2 L Ts) aliases.
    const auto cfg9 = LoRaConfig::make(9);
    CHECK(cfo_ambiguity_hz(cfg9) == doctest::Approx(122.0703125));
    const double est = estimate_cfo(rotate(synth_preamble(cfg9), 200.0), cfg9);
    CHECK(std::abs(est - 200.0) > 100.0);
    CHECK(est == doctest::Approx(200.0 - 2 * cfo_ambiguity_hz(cfg9)).epsilon(1e-6));

    ComplexSignal one_symbol{std::vector<cplx>(x.samples.begin(), x.samples.begin() + 256), x.sample_rate_hz};
    CHECK_THROWS_AS(estimate_cfo(one_symbol, cfg7), InvalidArgument);
  }

  TEST_CASE("CFO compensation") {
    const auto cfg = LoRaConfig::make(7);
    const auto x = synth_preamble(cfg);
    const auto same = compensate_cfo(x, 0.0);
    for (std::size_t n = 0; n < x.size(); ++n) CHECK(same.samples[n] == x.samples[n]);

    const auto back = compensate_cfo(rotate(x, 123.4), 123.4);
    double err = 0;
    for (std::size_t n = 0; n < x.size(); ++n) err = std::max(err, std::abs(back.samples[n] - x.samples[n]));
    CHECK(err < 1e-9);

    for (double snr : {30.0, 40.0}) {
      RngStream rng(static_cast<std::uint64_t>(snr));
      const auto y = add_awgn(rotate(x, 180.0), snr, rng);
      const auto fixed = compensate_cfo(y, estimate_cfo(y, cfg));
      CHECK(std::abs(estimate_cfo(fixed, cfg)) < 0.5);
    }
  }

  TEST_CASE("normalize_rms") {
    ComplexSignal c{std::vector<cplx>(50, std::polar(2.0, 0.7)), 1.0};
    for (const auto& v : normalize_rms(c).samples) CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-12));

    RngStream rng(2);
    ComplexSignal r{std::vector<cplx>(300), 1.0};
    for (auto& v : r.samples) v = rng.complex_normal(3.0);
    const auto a = normalize_rms(r);
    CHECK(std::abs(rms(a) - 1.0) < 1e-9);
    ComplexSignal r7 = r;
    for (auto& v : r7.samples) v *= 7.0;
    const auto b = normalize_rms(r7);
    for (std::size_t n = 0; n < a.size(); ++n) CHECK(std::abs(a.samples[n] - b.samples[n]) < 1e-12);

    ComplexSignal z{std::vector<cplx>(8), 1.0};
    CHECK_THROWS_AS(normalize_rms(z), InvalidArgument);
  }

  TEST_CASE("stft layout and geometry") {
    ComplexSignal ones{std::vector<cplx>(12, cplx{1.0, 0.0}), 1.0};
    const auto m = stft(ones, {4, 4});
    REQUIRE(m.rows == 4);
    REQUIRE(m.cols == 3);
    for (std::size_t c = 0; c < m.cols; ++c) {
      for (std::size_t r = 0; r < 4; ++r) CHECK(std::abs(m.at(r, c) - cplx{r == 2 ? 4.0 : 0.0, 0.0}) < 1e-12);
    }

    const auto x = synth_preamble(LoRaConfig::make(7));
    CHECK(stft(x, {}).cols == 63);

    // Tone at bin 5 lands in row 5 + N/2.
    ComplexSignal tone{std::vector<cplx>(256), 1.0};
    for (std::size_t n = 0; n < tone.size(); ++n) tone.samples[n] = std::polar(1.0, 2 * std::numbers::pi * 5 * n / 64.0);
    const auto t = stft(tone, {});
    for (std::size_t c = 0; c < t.cols; ++c) {
      std::size_t best = 0;
      for (std::size_t r = 1; r < t.rows; ++r) {
        if (std::abs(t.at(r, c)) > std::abs(t.at(best, c))) best = r;
      }
      CHECK(best == 37);
    }

    CHECK_THROWS_AS(stft(ComplexSignal{std::vector<cplx>(10, 1.0), 1.0}, {}), InvalidArgument);
    CHECK_THROWS_AS((StftConfig{48, 16}.validate()), InvalidArgument);
    CHECK_THROWS_AS((StftConfig{64, 65}.validate()), InvalidArgument);
  }

  TEST_CASE("spectrogram widths") {
    CHECK(spectrogram_width(LoRaConfig::make(7)) == 62);
    CHECK(spectrogram_width(LoRaConfig::make(8)) == 126);
    CHECK(spectrogram_width(LoRaConfig::make(9)) == 254);
    for (int sf : {7, 8, 9}) {
      const auto cfg = LoRaConfig::make(sf);
      const auto s = channel_independent_spectrogram(synth_preamble(cfg));
      CHECK(s.rows == 64);
      CHECK(s.cols == spectrogram_width(cfg));
      for (float v : s.values) REQUIRE(std::isfinite(v));
    }
    CHECK_THROWS_AS(spectrogram_width(LoRaConfig::make(7), {64, 48}), InvalidArgument);
    CHECK_THROWS_AS(channel_independent_spectrogram(ComplexSignal{std::vector<cplx>(64, 1.0), 1.0}), InvalidArgument);
  }

  TEST_CASE("spectrogram is scale invariant") {
    RngStream rng(4);
    ComplexSignal x = synth_preamble(LoRaConfig::make(7));
    x = add_awgn(x, 10.0, rng);
    for (double c : {0.01, 3.0, 250.0}) {
      ComplexSignal y = x;
      for (auto& v : y.samples) v *= c;
      const auto a = channel_independent_spectrogram(x);
      const auto b = channel_independent_spectrogram(y);
      double worst = 0;
      for (std::size_t i = 0; i < a.values.size(); ++i) worst = std::max(worst, double(std::abs(a.values[i] - b.values[i])));
      CHECK(worst < 1e-3);
    }
  }

  TEST_CASE("near-flat static channel barely changes the spectrogram") {
    const auto x = synth_preamble(LoRaConfig::make(7));
    for (double snr : {30.0, 40.0}) {
      RngStream r1(1), r2(1);
      const auto a = channel_independent_spectrogram(add_awgn(x, snr, r1));
      const auto b = channel_independent_spectrogram(
          add_awgn(apply_multipath(x, {cplx{1.0, 0.0}, cplx{0.03, 0.04}}), snr, r2));
      std::vector<double> d;
      for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t c = 1; c + 1 < a.cols; ++c) d.push_back(std::abs(a.at(r, c) - b.at(r, c)));
      }
      std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
      CHECK(d[d.size() / 2] < 1.0);
    }
    // A single complex tap is a pure gain and cancels exactly.
    const auto g = channel_independent_spectrogram(apply_multipath(x, {cplx{0.3, -0.4}}));
    const auto ref = channel_independent_spectrogram(x);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.values.size(); ++i) worst = std::max(worst, double(std::abs(g.values[i] - ref.values[i])));
    CHECK(worst < 1e-3);
  }

  TEST_CASE("slicing") {
    const auto s7 = slice_signal(synth_preamble(LoRaConfig::make(7)));
    CHECK(s7.size() == 8);
    CHECK(slice_signal(synth_preamble(LoRaConfig::make(9))).size() == 32);
    const auto x = synth_preamble(LoRaConfig::make(7));
    for (std::size_t k = 0; k < s7.size(); ++k) {
      REQUIRE(s7[k].size() == 256);
      CHECK(s7[k].samples.front() == x.samples[k * 256]);
      const auto sp = channel_independent_spectrogram(s7[k]);
      CHECK(sp.rows == 64);
      CHECK(sp.cols == 6);
    }
    CHECK_THROWS_AS(slice_signal(ComplexSignal{std::vector<cplx>(300, 1.0), 1.0}), InvalidArgument);
  }

  TEST_CASE("model input is clipped and standardised") {
    Spectrogram s{2, 3, {-100.f, -10.f, 0.f, 10.f, 20.f, 100.f}};
    const auto v = to_model_input(s);
    double mean = 0, var = 0;
    for (float f : v) mean += f;
    mean /= v.size();
    for (float f : v) var += (f - mean) * (f - mean);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(var / v.size() == doctest::Approx(1.0).epsilon(1e-5));
    Spectrogram clipped{2, 3, {-60.f, -10.f, 0.f, 10.f, 20.f, 60.f}};
    CHECK(to_model_input(clipped) == v);
  }

  TEST_CASE("spectrogram serialisation") {
    const auto s = channel_independent_spectrogram(synth_preamble(LoRaConfig::make(7)));
    std::stringstream ss;
    write_spectrogram(ss, s);
    CHECK(ss.str().size() == 8 + 4 * s.values.size());
    const auto back = read_spectrogram(ss);
    CHECK(back.rows == s.rows);
    CHECK(back.cols == s.cols);
    CHECK(back.values == s.values);
    std::stringstream bad("abc");
    CHECK_THROWS_AS(read_spectrogram(bad), DataError);
  }
}

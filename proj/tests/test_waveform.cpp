#include <cmath>
#include <numbers>

#include "doctest.h"
#include "rffi/errors.hpp"
#include "rffi/waveform.hpp"

using namespace rffi;

TEST_SUITE("waveform") {
  TEST_CASE("symbol duration") {
    CHECK(symbol_duration(LoRaConfig::make(7)) == doctest::Approx(1.024e-3).epsilon(1e-12));
    CHECK(symbol_duration(LoRaConfig::make(8)) == doctest::Approx(2.048e-3).epsilon(1e-12));
    CHECK(symbol_duration(LoRaConfig::make(7, 128.0, 128.0)) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("preamble lengths") {
    CHECK(synth_preamble(LoRaConfig::make(7)).size() == 2048);
    CHECK(synth_preamble(LoRaConfig::make(8)).size() == 4096);
    CHECK(synth_preamble(LoRaConfig::make(9)).size() == 8192);
    CHECK(samples_per_preamble(LoRaConfig::make(7)) == 2048);
    CHECK(samples_per_preamble(LoRaConfig::make(8)) == 4096);
    CHECK(samples_per_preamble(LoRaConfig::make(7, 125000.0, 125000.0, 1)) == 128);
  }

  TEST_CASE("length law over sf and oversampling") {
    for (int sf = 7; sf <= 12; ++sf) {
      for (int os : {1, 2, 4}) {
        const auto cfg = LoRaConfig::make(sf, 125000.0, 125000.0 * os, 2);
        CHECK(synth_preamble(cfg).size() == samples_per_preamble(cfg));
        CHECK(samples_per_preamble(cfg) == 2 * (std::size_t{1} << sf) * static_cast<std::size_t>(os));
      }
    }
  }

  TEST_CASE("constant envelope and symbol periodicity") {
    for (double amp : {1.0, 0.3}) {
      const auto cfg = LoRaConfig::make(7, 125000.0, 250000.0, 8, amp);
      const auto s = synth_preamble(cfg);
      const std::size_t l = cfg.samples_per_symbol();
      for (std::size_t n = 0; n < s.size(); ++n) {
        REQUIRE(std::abs(std::abs(s.samples[n]) - amp) < 1e-12);
        if (n + l < s.size()) REQUIRE(std::abs(s.samples[n] - s.samples[n + l]) < 1e-9);
      }
    }
  }

  TEST_CASE("instantaneous frequency sweeps from -B/2 to +B/2") {
    // Oversample heavily so the finite-difference slope tracks the chirp closely.
    const auto cfg = LoRaConfig::make(7, 125000.0, 125000.0 * 16, 1);
    const auto s = synth_preamble(cfg);
    const double fs = cfg.sample_rate_hz;
    auto freq = [&](std::size_t n) { return std::arg(s.samples[n + 1] * std::conj(s.samples[n])) * fs / (2 * std::numbers::pi); };
    const double b = cfg.bandwidth_hz;
    CHECK(freq(0) == doctest::Approx(-b / 2).epsilon(0.01));
    CHECK(freq(s.size() - 2) == doctest::Approx(b / 2).epsilon(0.01));
    CHECK(freq(s.size() / 2) == doctest::Approx(0.0).epsilon(0.01).scale(b));
    // Linear sweep: equal frequency increments across the symbol.
    const double d1 = freq(s.size() / 2) - freq(s.size() / 4);
    const double d2 = freq(3 * s.size() / 4) - freq(s.size() / 2);
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-3));
  }

  TEST_CASE("invalid configurations are rejected") {
    CHECK_THROWS_AS(LoRaConfig::make(6), InvalidArgument);
    CHECK_THROWS_AS(LoRaConfig::make(13), InvalidArgument);
    CHECK_THROWS_AS(LoRaConfig::make(7, 125000.0, 100000.0), InvalidArgument);
    CHECK_THROWS_AS(LoRaConfig::make(7, 125000.0, 300000.0), InvalidArgument);
    CHECK_THROWS_AS(LoRaConfig::make(7, 125000.0, 250000.0, 0), InvalidArgument);
  }
}

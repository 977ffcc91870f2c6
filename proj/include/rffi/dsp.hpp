#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

#include "rffi/signal.hpp"
#include "rffi/waveform.hpp"

namespace rffi {

/// Rectangular-window STFT geometry.
struct StftConfig {
  std::size_t window_len = 64;
  std::size_t hop = 32;
  void validate() const;
};

/// Row-major complex matrix; rows are frequency bins, columns are frames.
struct ComplexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<cplx> data;
  cplx& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const cplx& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// N x (M-1) matrix of adjacent-frame power ratios in dB, row-major.
struct Spectrogram {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
  int sf_tag = 0;
  int device_label = -1;
  double snr_db = std::numeric_limits<double>::quiet_NaN();

  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Start index of the preamble inside `buffer`, found as the peak of the
/// cross-correlation magnitude with the ideal preamble. Returns nullopt when
/// the peak-to-median ratio is below `threshold`.
std::optional<std::size_t> detect_and_sync(const ComplexSignal& buffer, const LoRaConfig& config,
                                           double threshold = 6.0);

/// Symbol-repetition CFO estimate, angle(sum r[n+L] conj(r[n])) / (2 pi L Ts).
/// Unambiguous only for |cfo| < 1 / (2 L Ts).
double estimate_cfo(const ComplexSignal& preamble, const LoRaConfig& config);

/// Largest CFO magnitude estimate_cfo can resolve for this configuration.
double cfo_ambiguity_hz(const LoRaConfig& config);

ComplexSignal compensate_cfo(const ComplexSignal& signal, double cfo_hz);

ComplexSignal normalize_rms(const ComplexSignal& signal);

/// Receiver preprocessing: CFO estimate and compensation, then RMS normalisation.
ComplexSignal preprocess_preamble(const ComplexSignal& signal, const LoRaConfig& config);

/// N-point DFT of each frame [mR, mR+N); M = floor((len-N)/R)+1 columns.
/// Rows are shifted so bin 0 sits at row N/2.
ComplexMatrix stft(const ComplexSignal& signal, const StftConfig& cfg);

/// S[k,m] = 10 log10(max(|X[k,m]|^2, eps) / max(|X[k,m-1]|^2, eps)), m = 1..M-1,
/// with eps = 1e-12 times the mean bin energy.
Spectrogram channel_independent_spectrogram(const ComplexSignal& signal, const StftConfig& cfg = {});

/// (n_symbols * 2^sf / B / Ts - N) / R; rejects non-integer results.
std::size_t spectrogram_width(const LoRaConfig& config, const StftConfig& cfg = {});

std::vector<ComplexSignal> slice_signal(const ComplexSignal& signal, std::size_t slice_len = 256);

/// Clips to [-60, 60] dB and standardises to zero mean, unit variance.
std::vector<float> to_model_input(const Spectrogram& s);

/// Little-endian: uint32 rows, uint32 cols, then rows*cols float32 row-major.
void write_spectrogram(std::ostream& out, const Spectrogram& s);
Spectrogram read_spectrogram(std::istream& in);

}  // namespace rffi

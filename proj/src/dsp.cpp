#include "rffi/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>
#include <unsupported/Eigen/FFT>

#include "rffi/errors.hpp"

namespace rffi {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated spectrogram header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void StftConfig::validate() const {
  if (window_len == 0 || !std::has_single_bit(window_len)) throw InvalidArgument("window_len must be a power of two");
  if (hop == 0 || hop > window_len) throw InvalidArgument("hop must satisfy 0 < hop <= window_len");
}

std::optional<std::size_t> detect_and_sync(const ComplexSignal& buffer, const LoRaConfig& config, double threshold) {
  validate(buffer);
  const ComplexSignal templ = synth_preamble(config);
  const std::size_t p = templ.size();
  if (buffer.size() < p) throw InvalidArgument("buffer is shorter than one preamble");
  const std::size_t offsets = buffer.size() - p + 1;

  // corr[k] = sum_n buf[k+n] conj(templ[n]) via zero-padded FFTs.
  const std::size_t nfft = next_pow2(buffer.size() + p);
  std::vector<cplx> a(nfft), b(nfft), fa, fb, prod(nfft), corr;
  std::copy(buffer.samples.begin(), buffer.samples.end(), a.begin());
  std::copy(templ.samples.begin(), templ.samples.end(), b.begin());
  auto& fft = fft_engine();
  fft.fwd(fa, a);
  fft.fwd(fb, b);
  for (std::size_t i = 0; i < nfft; ++i) prod[i] = fa[i] * std::conj(fb[i]);
  fft.inv(corr, prod);

  std::vector<double> mag(offsets);
  for (std::size_t k = 0; k < offsets; ++k) mag[k] = std::abs(corr[k]);

  const auto peak_it = std::max_element(mag.begin(), mag.end());
  const std::size_t peak = static_cast<std::size_t>(peak_it - mag.begin());
  std::vector<double> sorted = mag;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(offsets / 2), sorted.end());
  const double median = sorted[offsets / 2];
  if (!(*peak_it > 0.0)) return std::nullopt;
  if (median > 0.0 && *peak_it / median < threshold) return std::nullopt;

  double refined = static_cast<double>(peak);
  if (peak > 0 && peak + 1 < offsets) {
    const double ym = mag[peak - 1], y0 = mag[peak], yp = mag[peak + 1];
    const double denom = ym - 2.0 * y0 + yp;
    if (denom != 0.0) refined += std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
  }
  const auto rounded = static_cast<long long>(std::llround(refined));
  return static_cast<std::size_t>(std::clamp<long long>(rounded, 0, static_cast<long long>(offsets - 1)));
}

double cfo_ambiguity_hz(const LoRaConfig& config) {
  return config.sample_rate_hz / (2.0 * static_cast<double>(config.samples_per_symbol()));
}

double estimate_cfo(const ComplexSignal& preamble, const LoRaConfig& config) {
  validate(preamble);
  const std::size_t lag = config.samples_per_symbol();
  if (preamble.size() < 2 * lag) throw InvalidArgument("CFO estimation needs at least two symbols");
  cplx acc{};
  for (std::size_t n = 0; n + lag < preamble.size(); ++n) {
    acc += preamble.samples[n + lag] * std::conj(preamble.samples[n]);
  }
  return std::arg(acc) / (2.0 * kPi * static_cast<double>(lag) * preamble.sample_period());
}

ComplexSignal compensate_cfo(const ComplexSignal& signal, double cfo_hz) {
  ComplexSignal out = signal;
  if (cfo_hz == 0.0) return out;
  const double w = -2.0 * kPi * cfo_hz * signal.sample_period();
  for (std::size_t n = 0; n < out.size(); ++n) out.samples[n] *= std::polar(1.0, w * static_cast<double>(n));
  return out;
}

ComplexSignal normalize_rms(const ComplexSignal& signal) {
  const double r = rms(signal);
  if (!(r > 0.0)) throw InvalidArgument("cannot normalise a zero-power signal");
  ComplexSignal out = signal;
  for (cplx& v : out.samples) v /= r;
  return out;
}

ComplexSignal preprocess_preamble(const ComplexSignal& signal, const LoRaConfig& config) {
  return normalize_rms(compensate_cfo(signal, estimate_cfo(signal, config)));
}

ComplexMatrix stft(const ComplexSignal& signal, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.window_len;
  if (signal.size() < n) throw InvalidArgument("signal shorter than the STFT window");
  const std::size_t cols = (signal.size() - n) / cfg.hop + 1;
  ComplexMatrix out{n, cols, std::vector<cplx>(n * cols)};
  auto& fft = fft_engine();
  std::vector<cplx> frame(n), spectrum;
  for (std::size_t m = 0; m < cols; ++m) {
    std::copy_n(signal.samples.begin() + static_cast<std::ptrdiff_t>(m * cfg.hop), n, frame.begin());
    fft.fwd(spectrum, frame);
    for (std::size_t k = 0; k < n; ++k) out.at((k + n / 2) % n, m) = spectrum[k];
  }
  return out;
}

Spectrogram channel_independent_spectrogram(const ComplexSignal& signal, const StftConfig& cfg) {
  const ComplexMatrix x = stft(signal, cfg);
  if (x.cols < 2) throw InvalidArgument("signal too short for two STFT frames");
  std::vector<double> energy(x.data.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    energy[i] = std::norm(x.data[i]);
    mean += energy[i];
  }
  mean /= static_cast<double>(energy.size());
  const double eps = 1e-12 * mean;
  // An all-zero input leaves eps = 0; fall back to an absolute floor.
  const double floor = eps > 0.0 ? eps : std::numeric_limits<double>::min();

  Spectrogram s;
  s.rows = x.rows;
  s.cols = x.cols - 1;
  s.values.resize(s.rows * s.cols);
  for (std::size_t k = 0; k < x.rows; ++k) {
    for (std::size_t m = 1; m < x.cols; ++m) {
      const double num = std::max(energy[k * x.cols + m], floor);
      const double den = std::max(energy[k * x.cols + m - 1], floor);
      s.values[k * s.cols + (m - 1)] = static_cast<float>(10.0 * std::log10(num / den));
    }
  }
  return s;
}

std::size_t spectrogram_width(const LoRaConfig& config, const StftConfig& cfg) {
  config.validate();
  cfg.validate();
  const std::size_t len = samples_per_preamble(config);
  if (len < cfg.window_len + cfg.hop) throw InvalidArgument("preamble too short for two STFT frames");
  const std::size_t span = len - cfg.window_len;
  if (span % cfg.hop != 0) {
    throw InvalidArgument("(preamble length - window) / hop is not an integer: " + std::to_string(span) + " / " +
                          std::to_string(cfg.hop));
  }
  return span / cfg.hop;
}

std::vector<ComplexSignal> slice_signal(const ComplexSignal& signal, std::size_t slice_len) {
  if (slice_len == 0) throw InvalidArgument("slice length must be positive");
  if (signal.size() % slice_len != 0) {
    throw InvalidArgument("signal length " + std::to_string(signal.size()) + " is not divisible by slice length " +
                          std::to_string(slice_len));
  }
  std::vector<ComplexSignal> out;
  out.reserve(signal.size() / slice_len);
  for (std::size_t start = 0; start < signal.size(); start += slice_len) {
    ComplexSignal s;
    s.sample_rate_hz = signal.sample_rate_hz;
    s.samples.assign(signal.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     signal.samples.begin() + static_cast<std::ptrdiff_t>(start + slice_len));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<float> to_model_input(const Spectrogram& s) {
  std::vector<float> out(s.values.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(s.values[i], -60.0f, 60.0f);
    mean += out[i];
  }
  mean /= static_cast<double>(out.size());
  double var = 0.0;
  for (float v : out) var += (v - mean) * (v - mean);
  var /= static_cast<double>(out.size());
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  for (float& v : out) v = static_cast<float>((v - mean) * inv);
  return out;
}

void write_spectrogram(std::ostream& out, const Spectrogram& s) {
  put_u32(out, static_cast<std::uint32_t>(s.rows));
  put_u32(out, static_cast<std::uint32_t>(s.cols));
  for (float v : s.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw DataError("failed to write spectrogram");
}

Spectrogram read_spectrogram(std::istream& in) {
  Spectrogram s;
  s.rows = get_u32(in);
  s.cols = get_u32(in);
  s.values.resize(s.rows * s.cols);
  for (float& v : s.values) v = std::bit_cast<float>(get_u32(in));
  return s;
}

}  // namespace rffi

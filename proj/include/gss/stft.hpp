#pragma once

#include <unsupported/Eigen/FFT>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gss/common.hpp"

namespace gss::stft {

enum class Window { kHann, kSqrtHann };
enum class PadMode { kReflectCenter };

struct StftConfig {
  int fft_size = 1024;
  int shift = 256;
  Window window = Window::kHann;
  int sample_rate = 16000;
  PadMode pad_mode = PadMode::kReflectCenter;

  int num_bins() const { return fft_size / 2 + 1; }

  void validate() const {
    if (fft_size <= 0 || shift <= 0) {
      throw ConfigError("stft: fft_size and shift must be positive");
    }
    if (fft_size % shift != 0) {
      throw ConfigError(strformat(
          "stft: shift %d must divide fft_size %d for overlap-add", shift,
          fft_size));
    }
    if (sample_rate <= 0) throw ConfigError("stft: sample_rate must be positive");
  }
};

/// Multi-channel time-domain signal, one vector per channel.
struct RealSignal {
  std::vector<std::vector<float>> channels;
  int sample_rate = 0;

  int num_channels() const { return static_cast<int>(channels.size()); }
  int64_t num_samples() const {
    return channels.empty() ? 0 : static_cast<int64_t>(channels[0].size());
  }
};

/// Complex STFT cube laid out (F, T, M) row-major. Frame t starts at sample
/// origin_samples + t·shift of the source signal, so with reflect-center
/// padding the frame center sits exactly at t·shift.
struct SpectrogramTensor {
  std::vector<cfloat> data;
  StftConfig config;
  int64_t origin_samples = 0;
  int64_t num_samples = 0;  // source length, used to trim synthesis output

  int num_bins = 0;      // F
  int64_t num_frames = 0;  // T
  int num_channels = 0;  // M

  int64_t index(int f, int64_t t, int m) const {
    return (static_cast<int64_t>(f) * num_frames + t) * num_channels + m;
  }
  cfloat& at(int f, int64_t t, int m) { return data[index(f, t, m)]; }
  const cfloat& at(int f, int64_t t, int m) const { return data[index(f, t, m)]; }

  static SpectrogramTensor zeros(const StftConfig& cfg, int64_t frames,
                                 int channels) {
    SpectrogramTensor out;
    out.config = cfg;
    out.num_bins = cfg.num_bins();
    out.num_frames = frames;
    out.num_channels = channels;
    out.origin_samples = -cfg.fft_size / 2;
    out.data.assign(
        static_cast<size_t>(out.num_bins) * frames * channels, cfloat{});
    return out;
  }
};

/// Sum of squared hann window values across overlapping frames at 75%
/// overlap. Interior overlap-add weight and the Parseval scale factor
/// (time-domain energy × fft_size × this = two-sided spectral energy).
constexpr double kHannOverlapPowerSum = 1.5;

namespace detail {

inline std::vector<double> make_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.fft_size);
  for (int n = 0; n < cfg.fft_size; ++n) {
    const double hann =
        0.5 * (1.0 - std::cos(2.0 * M_PI * n / cfg.fft_size));
    w[n] = cfg.window == Window::kHann ? hann : std::sqrt(hann);
  }
  return w;
}

// Reflect padding without edge repetition: [..., x2, x1] x0 x1 ... x_{n-1} [x_{n-2}, ...]
inline std::vector<double> pad_reflect(const std::vector<float>& x, int64_t pad_left,
                                       int64_t pad_right) {
  const int64_t n = static_cast<int64_t>(x.size());
  std::vector<double> out(n + pad_left + pad_right);
  for (int64_t i = 0; i < pad_left; ++i) out[i] = x[pad_left - i];
  for (int64_t i = 0; i < n; ++i) out[pad_left + i] = x[i];
  for (int64_t i = 0; i < pad_right; ++i) {
    int64_t src = n - 2 - i;
    // fold back and forth for pads longer than the signal
    while (src < 0 || src >= n) {
      if (src < 0) src = -src;
      if (src >= n) src = 2 * (n - 1) - src;
    }
    out[pad_left + n + i] = x[src];
  }
  return out;
}

}  // namespace detail

inline int64_t frame_count(int64_t num_samples, const StftConfig& cfg) {
  // reflect-center pads fft_size/2 on each side
  const int64_t padded = num_samples + cfg.fft_size;
  return (padded - cfg.fft_size) / cfg.shift + 1;
}

/// Center sample (in source coordinates) of analysis frame t.
inline int64_t frame_center(int64_t t, const StftConfig& cfg) {
  return t * cfg.shift;
}

inline SpectrogramTensor analyze(const RealSignal& signal,
                                 const StftConfig& cfg) {
  cfg.validate();
  const int m_count = signal.num_channels();
  const int64_t n = signal.num_samples();
  if (m_count < 1) throw ShapeError("stft.analyze: no channels");
  for (const auto& ch : signal.channels) {
    if (static_cast<int64_t>(ch.size()) != n) {
      throw ShapeError("stft.analyze: channels differ in length");
    }
  }
  if (n < cfg.fft_size) {
    throw InputTooShortError(strformat(
        "stft.analyze: %lld samples < fft_size %d", (long long)n, cfg.fft_size));
  }

  const int pad = cfg.fft_size / 2;
  const int64_t t_count = frame_count(n, cfg);
  SpectrogramTensor out = SpectrogramTensor::zeros(cfg, t_count, m_count);
  out.num_samples = n;
  if (signal.sample_rate > 0 && signal.sample_rate != cfg.sample_rate) {
    throw ConfigError(strformat("stft.analyze: signal is %d Hz, config %d Hz",
                                signal.sample_rate, cfg.sample_rate));
  }

  const std::vector<double> window = detail::make_window(cfg);
  const int f_count = cfg.num_bins();
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(cfg.fft_size);
  std::vector<std::complex<double>> spec(f_count);
  for (int m = 0; m < m_count; ++m) {
    const std::vector<double> padded =
        detail::pad_reflect(signal.channels[m], pad, pad);
    for (int64_t t = 0; t < t_count; ++t) {
      const double* src = padded.data() + t * cfg.shift;
      for (int i = 0; i < cfg.fft_size; ++i) frame[i] = src[i] * window[i];
      fft.fwd(spec, frame);
      for (int f = 0; f < f_count; ++f) {
        out.at(f, t, m) = static_cast<cfloat>(spec[f]);
      }
    }
  }
  return out;
}

/// Inverse STFT by overlap-add with the weighted-window dual, trimmed to the
/// source length recorded in the tensor.
inline RealSignal synthesize(const SpectrogramTensor& spec) {
  const StftConfig& cfg = spec.config;
  cfg.validate();
  if (spec.num_bins != cfg.num_bins()) {
    throw ConfigError(strformat("stft.synthesize: tensor has %d bins, config %d",
                                spec.num_bins, cfg.num_bins()));
  }
  const int64_t t_count = spec.num_frames;
  const int m_count = spec.num_channels;
  const int pad = cfg.fft_size / 2;
  const int64_t padded_len = (t_count - 1) * cfg.shift + cfg.fft_size;
  const int64_t out_len =
      spec.num_samples > 0
          ? spec.num_samples
          : std::max<int64_t>(0, padded_len - 2 * static_cast<int64_t>(pad));

  const std::vector<double> window = detail::make_window(cfg);
  std::vector<double> wsum(padded_len, 0.0);
  for (int64_t t = 0; t < t_count; ++t) {
    double* dst = wsum.data() + t * cfg.shift;
    for (int i = 0; i < cfg.fft_size; ++i) dst[i] += window[i] * window[i];
  }

  RealSignal out;
  out.sample_rate = cfg.sample_rate;
  out.channels.assign(m_count, std::vector<float>(out_len, 0.0f));

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> bins(spec.num_bins);
  std::vector<double> frame(cfg.fft_size);
  std::vector<double> ola(padded_len);
  for (int m = 0; m < m_count; ++m) {
    std::fill(ola.begin(), ola.end(), 0.0);
    for (int64_t t = 0; t < t_count; ++t) {
      for (int f = 0; f < spec.num_bins; ++f) {
        bins[f] = static_cast<std::complex<double>>(spec.at(f, t, m));
      }
      fft.inv(frame, bins, cfg.fft_size);
      double* dst = ola.data() + t * cfg.shift;
      for (int i = 0; i < cfg.fft_size; ++i) dst[i] += frame[i] * window[i];
    }
    for (int64_t i = 0; i < out_len; ++i) {
      const int64_t p = i + pad;
      if (p < padded_len && wsum[p] > 1e-8) {
        out.channels[m][i] = static_cast<float>(ola[p] / wsum[p]);
      }
    }
  }
  return out;
}

}  // namespace gss::stft

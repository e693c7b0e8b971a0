#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gss/beamform.hpp"
#include "gss/cacgmm.hpp"
#include "gss/common.hpp"
#include "gss/manifests.hpp"
#include "gss/stft.hpp"
#include "gss/wav.hpp"

namespace gss::synthbench {

// ---------------------------------------------------------------------------
// Portable deterministic RNG (fixed across platforms, unlike std::mt19937
// distributions)
// ---------------------------------------------------------------------------

struct SplitMix64 {
  uint64_t state = 0;

  explicit SplitMix64(uint64_t seed) : state(seed) {}

  uint64_t next() {
    state += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() {  // [0, 1)
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
  SplitMix64 rng(seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL));
  return rng.next();
}

// ---------------------------------------------------------------------------
// MixtureSpec and validation
// ---------------------------------------------------------------------------

enum class Steering { kDelays, kRandomPhase };

struct SpeakerLayout {
  std::string name;
  std::vector<std::pair<double, double>> segments;  // (start, duration) seconds
};

struct MixtureSpec {
  double duration = 40.0;
  int sample_rate = 16000;
  int channels = 4;
  uint64_t seed = 17;
  std::vector<SpeakerLayout> speakers;
  Steering steering = Steering::kDelays;
  double reverb_t60 = 0.0;  // 0 disables the tail
  double noise_snr = 20.0;  // dB relative to mean mixture power

  void validate() const {
    if (duration <= 0 || sample_rate <= 0 || channels < 1) {
      throw SpecError("mixture spec: duration, sample_rate, channels must be positive");
    }
    if (speakers.empty()) throw SpecError("mixture spec: no speakers");
    for (const auto& spk : speakers) {
      if (spk.segments.empty()) {
        throw SpecError("mixture spec: speaker '" + spk.name + "' has no segments");
      }
      for (const auto& [start, dur] : spk.segments) {
        if (start < 0 || dur <= 0 || start + dur > duration) {
          throw SpecError(strformat(
              "mixture spec: segment [%g, %g) of '%s' outside [0, %g)", start,
              start + dur, spk.name.c_str(), duration));
        }
      }
    }
    if (reverb_t60 < 0 || reverb_t60 > 2.0) {
      throw SpecError("mixture spec: reverb_t60 must be in [0, 2]");
    }
  }

  static MixtureSpec from_json(const nlohmann::json& j) {
    MixtureSpec spec;
    spec.duration = j.value("duration", spec.duration);
    spec.sample_rate = j.value("sample_rate", spec.sample_rate);
    spec.channels = j.value("channels", spec.channels);
    spec.seed = j.value("seed", spec.seed);
    spec.reverb_t60 = j.value("reverb_t60", spec.reverb_t60);
    spec.noise_snr = j.value("noise_snr", spec.noise_snr);
    if (j.contains("steering")) {
      const std::string s = j.at("steering").get<std::string>();
      if (s == "delays") spec.steering = Steering::kDelays;
      else if (s == "random_phase") spec.steering = Steering::kRandomPhase;
      else throw SpecError("mixture spec: unknown steering '" + s + "'");
    }
    for (const auto& spk : j.at("speakers")) {
      SpeakerLayout layout;
      layout.name = spk.at("name").get<std::string>();
      for (const auto& seg : spk.at("segments")) {
        layout.segments.emplace_back(seg.at(0).get<double>(),
                                     seg.at(1).get<double>());
      }
      spec.speakers.push_back(std::move(layout));
    }
    spec.validate();
    return spec;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["duration"] = duration;
    j["sample_rate"] = sample_rate;
    j["channels"] = channels;
    j["seed"] = seed;
    j["steering"] = steering == Steering::kDelays ? "delays" : "random_phase";
    j["reverb_t60"] = reverb_t60;
    j["noise_snr"] = noise_snr;
    j["speakers"] = nlohmann::ordered_json::array();
    for (const auto& spk : speakers) {
      nlohmann::ordered_json js;
      js["name"] = spk.name;
      js["segments"] = nlohmann::ordered_json::array();
      for (const auto& [start, dur] : spk.segments) {
        js["segments"].push_back({start, dur});
      }
      j["speakers"].push_back(std::move(js));
    }
    return j;
  }
};

struct GeneratedMixture {
  stft::RealSignal mixture;                 // M channels, noise included
  std::vector<std::vector<float>> dry;      // per speaker, anechoic channel-0 aligned
  std::vector<std::vector<float>> images0;  // per speaker, channel-0 image incl. reverb
  std::vector<manifests::Segment> segments;
  std::vector<std::string> speaker_names;
};

namespace detail {

// Chirp and modulated-noise bursts in a speaker-specific band; deterministic
// in (seed, speaker). A stationary tone is linearly predictable across any
// frame gap, so a dereverberator would cancel the source itself. Sweeping
// chirps and filtered noise keep the dry signal unpredictable at the
// prediction delay while convolved tails stay predictable, the contrast the
// pipeline needs. Log-uniform sweep endpoints spread energy over the band so
// every bin sees each active class often enough to learn its shape.
inline void render_source(std::vector<float>& track, int64_t start, int64_t len,
                          int sr, int speaker_idx, SplitMix64& rng) {
  const double band_lo = 140.0 * (1.0 + 0.4 * speaker_idx) + 30.0 * rng.uniform();
  const double band_hi = std::min(6500.0, band_lo * 24.0);
  const double log_span = std::log(band_hi / band_lo);
  const int64_t edge = sr / 100;      // 10 ms raised-cosine burst edges
  const int64_t outer = sr / 50;      // 20 ms segment fade
  const double target_rms = 0.16;

  std::vector<double> burst;
  int64_t i = 0;
  while (i < len) {
    const int64_t n_burst = std::min<int64_t>(
        len - i, static_cast<int64_t>((0.10 + 0.22 * rng.uniform()) * sr));
    if (n_burst < 2 * edge) break;
    burst.assign(n_burst, 0.0);
    const double f1 = band_lo * std::exp(log_span * rng.uniform());
    const double f2 = band_lo * std::exp(log_span * rng.uniform());
    if (rng.uniform() < 0.6) {
      // two-harmonic chirp, geometric frequency sweep f1 -> f2
      double ph1 = 2.0 * M_PI * rng.uniform();
      double ph2 = 2.0 * M_PI * rng.uniform();
      for (int64_t j = 0; j < n_burst; ++j) {
        const double f =
            f1 * std::pow(f2 / f1, static_cast<double>(j) / n_burst);
        ph1 += 2.0 * M_PI * f / sr;
        ph2 += 2.0 * M_PI * 2.0 * f / sr;
        burst[j] = std::sin(ph1) + 0.35 * std::sin(ph2);
      }
    } else {
      // white noise through a two-pole resonator whose center sweeps f1 -> f2
      const double r = 0.97;
      double y1 = 0.0, y2 = 0.0;
      for (int64_t j = 0; j < n_burst; ++j) {
        const double f =
            f1 * std::pow(f2 / f1, static_cast<double>(j) / n_burst);
        const double theta = 2.0 * M_PI * f / sr;
        const double y = rng.gaussian() + 2.0 * r * std::cos(theta) * y1 -
                         r * r * y2;
        y2 = y1;
        y1 = y;
        burst[j] = y;
      }
    }
    double energy = 0.0;
    for (const double v : burst) energy += v * v;
    const double gain = (0.7 + 0.6 * rng.uniform()) * target_rms /
                        std::max(1e-12, std::sqrt(energy / n_burst));
    for (int64_t j = 0; j < n_burst; ++j) {
      double w = gain;
      if (j < edge) w *= 0.5 * (1.0 - std::cos(M_PI * j / edge));
      if (n_burst - 1 - j < edge) {
        w *= 0.5 * (1.0 - std::cos(M_PI * (n_burst - 1 - j) / edge));
      }
      const int64_t at = i + j;
      double seg_fade = 1.0;
      if (at < outer) seg_fade = static_cast<double>(at) / outer;
      if (len - 1 - at < outer) {
        seg_fade = std::min(seg_fade, static_cast<double>(len - 1 - at) / outer);
      }
      track[start + at] += static_cast<float>(burst[j] * w * seg_fade);
    }
    i += n_burst + static_cast<int64_t>((0.02 + 0.08 * rng.uniform()) * sr);
  }
}

// Exponential-tail impulse response: unit direct path at `delay`, then a
// gaussian tail decaying 60 dB over t60 seconds, scaled to the requested
// tail-to-direct energy ratio.
inline std::vector<float> exponential_ir(int delay, double t60, int sr,
                                         double tail_energy, SplitMix64& rng) {
  const int pre = sr / 64;  // 15.6 ms before the tail starts
  const int tail_len = static_cast<int>(t60 * sr * 1.2);
  std::vector<float> ir(delay + pre + tail_len, 0.0f);
  ir[delay] = 1.0f;
  if (t60 <= 0.0 || tail_len <= 0) return ir;
  double energy = 0.0;
  std::vector<double> tail(tail_len);
  for (int n = 0; n < tail_len; ++n) {
    const double envelope = std::exp(-6.908 * n / (t60 * sr));
    tail[n] = envelope * rng.gaussian();
    energy += tail[n] * tail[n];
  }
  const double scale = std::sqrt(tail_energy / std::max(energy, 1e-30));
  for (int n = 0; n < tail_len; ++n) {
    ir[delay + pre + n] = static_cast<float>(tail[n] * scale);
  }
  return ir;
}

// Overlap-add FFT convolution; all-zero input blocks are skipped.
inline std::vector<float> fft_convolve(const std::vector<float>& x,
                                       const std::vector<float>& ir) {
  const int64_t n = static_cast<int64_t>(x.size());
  const int64_t l = static_cast<int64_t>(ir.size());
  int64_t fft_size = 1;
  const int64_t block = 1 << 15;
  while (fft_size < block + l - 1) fft_size <<= 1;

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(fft_size, 0.0);
  std::vector<std::complex<double>> ir_spec;
  std::copy(ir.begin(), ir.end(), buf.begin());
  fft.fwd(ir_spec, buf);

  std::vector<float> out(n, 0.0f);
  std::vector<std::complex<double>> spec;
  std::vector<double> chunk(fft_size);
  for (int64_t b0 = 0; b0 < n; b0 += block) {
    const int64_t len = std::min<int64_t>(block, n - b0);
    bool all_zero = true;
    for (int64_t i = 0; i < len && all_zero; ++i) all_zero = x[b0 + i] == 0.0f;
    if (all_zero) continue;
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int64_t i = 0; i < len; ++i) buf[i] = x[b0 + i];
    fft.fwd(spec, buf);
    for (int64_t i = 0; i < static_cast<int64_t>(spec.size()); ++i) {
      spec[i] *= ir_spec[i];
    }
    fft.inv(chunk, spec, fft_size);
    const int64_t out_len = std::min<int64_t>(len + l - 1, n - b0);
    for (int64_t i = 0; i < out_len; ++i) {
      out[b0 + i] += static_cast<float>(chunk[i]);
    }
  }
  return out;
}

inline std::vector<float> delay_signal(const std::vector<float>& x, int delay) {
  std::vector<float> out(x.size(), 0.0f);
  for (int64_t i = delay; i < static_cast<int64_t>(x.size()); ++i) {
    out[i] = x[i - delay];
  }
  return out;
}

}  // namespace detail

/// Integer sample delay of speaker k at channel m; channel 0 is always the
/// undelayed reference.
inline int steering_delay(int speaker, int channel) {
  return channel == 0 ? 0 : 1 + (channel * (3 + 2 * speaker)) % 9;
}

inline GeneratedMixture generate(const MixtureSpec& spec) {
  spec.validate();
  const int sr = spec.sample_rate;
  const int64_t n = static_cast<int64_t>(std::llround(spec.duration * sr));
  const int m = spec.channels;
  const int k_count = static_cast<int>(spec.speakers.size());

  GeneratedMixture mix;
  mix.mixture.sample_rate = sr;
  mix.mixture.channels.assign(m, std::vector<float>(n, 0.0f));
  mix.dry.assign(k_count, std::vector<float>(n, 0.0f));
  mix.images0.assign(k_count, std::vector<float>(n, 0.0f));

  for (int k = 0; k < k_count; ++k) {
    const auto& layout = spec.speakers[k];
    mix.speaker_names.push_back(layout.name);
    int seg_idx = 0;
    for (const auto& [start, dur] : layout.segments) {
      const int64_t s0 = static_cast<int64_t>(std::llround(start * sr));
      const int64_t len = static_cast<int64_t>(std::llround(dur * sr));
      SplitMix64 rng(derive_seed(spec.seed, 1000 + k, seg_idx));
      detail::render_source(mix.dry[k], s0, std::min(len, n - s0), sr, k, rng);
      manifests::Segment seg;
      seg.id = strformat("%s-%04d", layout.name.c_str(), seg_idx);
      seg.speaker = layout.name;
      seg.start = start;
      seg.duration = dur;
      mix.segments.push_back(std::move(seg));
      ++seg_idx;
    }
  }

  // Spatialize each speaker into every channel.
  for (int k = 0; k < k_count; ++k) {
    for (int c = 0; c < m; ++c) {
      std::vector<float> channel_sig;
      if (spec.steering == Steering::kDelays) {
        const int d = steering_delay(k, c);
        if (spec.reverb_t60 > 0.0) {
          SplitMix64 rng(derive_seed(spec.seed, 2000 + k, c));
          const auto ir =
              detail::exponential_ir(d, spec.reverb_t60, sr, 0.5, rng);
          channel_sig = detail::fft_convolve(mix.dry[k], ir);
        } else {
          channel_sig = detail::delay_signal(mix.dry[k], d);
        }
      } else {
        // random-phase steering happens in the STFT domain below
        continue;
      }
      for (int64_t i = 0; i < n; ++i) mix.mixture.channels[c][i] += channel_sig[i];
      if (c == 0) mix.images0[k] = channel_sig;
    }
  }

  if (spec.steering == Steering::kRandomPhase) {
    // Constant-per-frequency unit phases for channels > 0; channel 0 stays
    // anchored to the dry source so references remain meaningful.
    stft::StftConfig cfg;
    cfg.sample_rate = sr;
    for (int k = 0; k < k_count; ++k) {
      std::vector<float> base = mix.dry[k];
      if (spec.reverb_t60 > 0.0) {
        SplitMix64 rng(derive_seed(spec.seed, 2000 + k, 0));
        const auto ir = detail::exponential_ir(0, spec.reverb_t60, sr, 0.5, rng);
        base = detail::fft_convolve(mix.dry[k], ir);
      }
      mix.images0[k] = base;
      stft::RealSignal mono;
      mono.sample_rate = sr;
      mono.channels.push_back(base);
      stft::SpectrogramTensor spec_k = stft::analyze(mono, cfg);
      stft::SpectrogramTensor multi =
          stft::SpectrogramTensor::zeros(cfg, spec_k.num_frames, m);
      multi.num_samples = spec_k.num_samples;
      SplitMix64 rng(derive_seed(spec.seed, 3000 + k, 0));
      std::vector<cfloat> phase(m);
      for (int f = 0; f < spec_k.num_bins; ++f) {
        phase[0] = cfloat(1.0f, 0.0f);
        for (int c = 1; c < m; ++c) {
          const double theta = 2.0 * M_PI * rng.uniform();
          phase[c] = cfloat(static_cast<float>(std::cos(theta)),
                            static_cast<float>(std::sin(theta)));
        }
        for (int64_t t = 0; t < spec_k.num_frames; ++t) {
          const cfloat v = spec_k.at(f, t, 0);
          for (int c = 0; c < m; ++c) multi.at(f, t, c) = v * phase[c];
        }
      }
      stft::RealSignal placed = stft::synthesize(multi);
      for (int c = 0; c < m; ++c) {
        for (int64_t i = 0; i < n; ++i) {
          mix.mixture.channels[c][i] += placed.channels[c][i];
        }
      }
    }
  }

  // Sensor noise at the requested SNR vs mean per-channel mixture power.
  double power = 0.0;
  for (int c = 0; c < m; ++c) {
    for (int64_t i = 0; i < n; ++i) {
      power += static_cast<double>(mix.mixture.channels[c][i]) *
               mix.mixture.channels[c][i];
    }
  }
  power /= static_cast<double>(m) * n;
  const double sigma = std::sqrt(power / std::pow(10.0, spec.noise_snr / 10.0));
  for (int c = 0; c < m; ++c) {
    SplitMix64 rng(derive_seed(spec.seed, 4000, c));
    for (int64_t i = 0; i < n; ++i) {
      mix.mixture.channels[c][i] += static_cast<float>(sigma * rng.gaussian());
    }
  }
  return mix;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

constexpr double kSiSdrCap = 100.0;

namespace detail {

inline double si_sdr_core(const float* estimate, const float* reference,
                          int64_t n) {
  double dot = 0.0, ref_energy = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    dot += static_cast<double>(estimate[i]) * reference[i];
    ref_energy += static_cast<double>(reference[i]) * reference[i];
  }
  if (ref_energy <= 0.0) {
    throw DegenerateStatsError("si_sdr: reference signal is all zero");
  }
  const double alpha = dot / ref_energy;
  const double signal = alpha * alpha * ref_energy;
  double error = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double e = alpha * reference[i] - estimate[i];
    error += e * e;
  }
  if (error <= signal * 1e-10) return kSiSdrCap;
  return std::min(kSiSdrCap, 10.0 * std::log10(signal / error));
}

}  // namespace detail

/// Scale-invariant SDR in dB, capped at 100. Lengths are trimmed to match.
inline double si_sdr(const std::vector<float>& estimate,
                     const std::vector<float>& reference) {
  const int64_t n = std::min(estimate.size(), reference.size());
  return detail::si_sdr_core(estimate.data(), reference.data(), n);
}

/// SI-SDR maximized over small integer time offsets between estimate and
/// reference. The beamformer is distortionless toward its reference channel,
/// whose steering delay shifts the output by a few samples; a shift search
/// keeps the metric about separation instead of microphone geometry.
inline double si_sdr_best_shift(const std::vector<float>& estimate,
                                const std::vector<float>& reference,
                                int max_shift = 16) {
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (int s = -max_shift; s <= max_shift; ++s) {
    const float* e = estimate.data();
    const float* r = reference.data();
    int64_t ne = static_cast<int64_t>(estimate.size());
    int64_t nr = static_cast<int64_t>(reference.size());
    if (s >= 0) {
      e += s;
      ne -= s;
    } else {
      r -= s;
      nr += s;
    }
    const int64_t n = std::min(ne, nr);
    if (n <= 0) continue;
    try {
      best = std::max(best, detail::si_sdr_core(e, r, n));
      any = true;
    } catch (const DegenerateStatsError&) {
      // a trimmed window may be silent even when the full reference is not
    }
  }
  if (!any) throw DegenerateStatsError("si_sdr: reference signal is all zero");
  return best;
}

/// Concatenates the spans of `speaker`'s segments (temporal order) out of a
/// full-length mono signal.
inline std::vector<float> concat_spans(const std::vector<float>& x,
                                       const std::vector<manifests::Segment>& segments,
                                       const std::string& speaker, int sr) {
  std::vector<manifests::Segment> mine;
  for (const auto& s : segments) {
    if (s.speaker == speaker) mine.push_back(s);
  }
  std::sort(mine.begin(), mine.end(), [](const auto& a, const auto& b) {
    return a.start < b.start;
  });
  std::vector<float> out;
  for (const auto& s : mine) {
    const int64_t lo = static_cast<int64_t>(std::llround(s.start * sr));
    const int64_t hi = std::min<int64_t>(
        static_cast<int64_t>(std::llround(s.end() * sr)), x.size());
    for (int64_t i = lo; i < hi; ++i) out.push_back(x[i]);
  }
  return out;
}

/// Shift-tolerant SI-SDR of the best single input channel for one speaker,
/// the baseline the pipeline must beat.
inline double best_input_si_sdr(const GeneratedMixture& mix, int speaker) {
  const int sr = mix.mixture.sample_rate;
  const auto ref =
      concat_spans(mix.dry[speaker], mix.segments, mix.speaker_names[speaker], sr);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& ch : mix.mixture.channels) {
    const auto est =
        concat_spans(ch, mix.segments, mix.speaker_names[speaker], sr);
    best = std::max(best, si_sdr_best_shift(est, ref));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Oracle beamformer (calibration ceiling)
// ---------------------------------------------------------------------------

struct OracleResult {
  std::vector<double> si_sdr_db;            // per speaker
  std::vector<std::vector<float>> enhanced; // per speaker, full length
};

/// MVDR with ideal-ratio masks from the true source images; the EM pipeline
/// is measured against this ceiling.
inline OracleResult oracle_mvdr(const GeneratedMixture& mix,
                                const stft::StftConfig& cfg) {
  const int k_count = static_cast<int>(mix.dry.size());
  const int sr = mix.mixture.sample_rate;
  stft::SpectrogramTensor y = stft::analyze(mix.mixture, cfg);

  // Residual = channel 0 minus all source images (sensor noise and
  // reconstruction leftovers).
  std::vector<float> residual = mix.mixture.channels[0];
  for (int k = 0; k < k_count; ++k) {
    for (size_t i = 0; i < residual.size(); ++i) residual[i] -= mix.images0[k][i];
  }

  std::vector<stft::SpectrogramTensor> image_specs;
  for (int k = 0; k < k_count; ++k) {
    stft::RealSignal mono;
    mono.sample_rate = sr;
    mono.channels.push_back(mix.images0[k]);
    image_specs.push_back(stft::analyze(mono, cfg));
  }
  stft::RealSignal res_mono;
  res_mono.sample_rate = sr;
  res_mono.channels.push_back(residual);
  image_specs.push_back(stft::analyze(res_mono, cfg));

  cacgmm::PosteriorTensor gamma;
  gamma.num_bins = y.num_bins;
  gamma.num_frames = y.num_frames;
  gamma.num_classes = k_count + 1;
  gamma.gamma.assign(
      static_cast<size_t>(y.num_bins) * y.num_frames * (k_count + 1), 0.0f);
  std::vector<double> p(k_count + 1);
  for (int f = 0; f < y.num_bins; ++f) {
    for (int64_t t = 0; t < y.num_frames; ++t) {
      double total = 0.0;
      for (int k = 0; k <= k_count; ++k) {
        p[k] = std::norm(
            static_cast<cdouble>(image_specs[k].at(f, t, 0)));
        total += p[k];
      }
      for (int k = 0; k <= k_count; ++k) {
        gamma.gamma[gamma.index(f, t, k)] =
            total > 0.0 ? static_cast<float>(p[k] / total)
                        : (k == k_count ? 1.0f : 0.0f);
      }
    }
  }

  OracleResult out;
  for (int k = 0; k < k_count; ++k) {
    beamform::BeamformerStats stats = beamform::accumulate_stats(y, gamma, k);
    const int ref = beamform::select_reference(stats);
    beamform::BeamformerFilter filter = beamform::mvdr(stats, ref);
    stft::SpectrogramTensor enhanced_spec = beamform::apply(filter, y);
    stft::RealSignal enhanced = stft::synthesize(enhanced_spec);
    out.enhanced.push_back(enhanced.channels[0]);
    const auto est = concat_spans(enhanced.channels[0], mix.segments,
                                  mix.speaker_names[k], sr);
    const auto ref_sig =
        concat_spans(mix.dry[k], mix.segments, mix.speaker_names[k], sr);
    out.si_sdr_db.push_back(si_sdr_best_shift(est, ref_sig));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fixture writing and canned layouts
// ---------------------------------------------------------------------------

struct FixturePaths {
  std::string recordings;
  std::string segments;
  std::string wav;
  manifests::Recording recording;
};

/// Writes the mixture WAV plus recordings/segments manifests under `dir`.
inline FixturePaths save_fixture(const GeneratedMixture& mix,
                                 const std::string& dir,
                                 const std::string& rec_id) {
  std::filesystem::create_directories(dir);
  FixturePaths paths;
  paths.wav = dir + "/" + rec_id + ".wav";
  paths.recordings = dir + "/recordings.jsonl";
  paths.segments = dir + "/segments.jsonl";
  wav::write(paths.wav, mix.mixture);

  manifests::Recording rec;
  rec.id = rec_id;
  rec.sample_rate = mix.mixture.sample_rate;
  rec.duration = static_cast<double>(mix.mixture.num_samples()) /
                 mix.mixture.sample_rate;
  manifests::Source src;
  src.path = paths.wav;
  for (int c = 0; c < mix.mixture.num_channels(); ++c) src.channels.push_back(c);
  rec.sources.push_back(std::move(src));
  manifests::save_recordings(paths.recordings, {rec});

  std::vector<manifests::Segment> segs = mix.segments;
  for (auto& s : segs) s.recording_id = rec_id;
  manifests::save_segments(paths.segments, segs);
  paths.recording = rec;
  return paths;
}

/// Two speakers, one third of the speech overlapped, anechoic, 20 dB noise.
inline MixtureSpec standard_fixture() {
  MixtureSpec spec;
  spec.duration = 42.0;
  spec.channels = 4;
  spec.seed = 12345;
  spec.steering = Steering::kDelays;
  spec.reverb_t60 = 0.0;
  spec.noise_snr = 20.0;
  spec.speakers = {
      {"spk0", {{2.0, 14.0}, {22.0, 12.0}}},
      {"spk1", {{10.0, 10.0}, {28.0, 12.0}}},
  };
  return spec;
}

/// The standard layout with a 0.3 s reverberant tail; channel count is a
/// parameter so channel-ablation sweeps can subset one fixture.
inline MixtureSpec reverberant_fixture(int channels = 8) {
  MixtureSpec spec = standard_fixture();
  spec.channels = channels;
  spec.seed = 54321;
  spec.reverb_t60 = 0.3;
  return spec;
}

/// Ten minutes of alternating two-speaker speech for throughput runs.
inline MixtureSpec ten_minute_fixture() {
  MixtureSpec spec;
  spec.duration = 600.0;
  spec.channels = 4;
  spec.seed = 99991;
  spec.steering = Steering::kDelays;
  spec.reverb_t60 = 0.15;
  spec.noise_snr = 20.0;
  SpeakerLayout a{"spk0", {}};
  SpeakerLayout b{"spk1", {}};
  for (int i = 0; i < 30; ++i) {
    a.segments.emplace_back(20.0 * i + 1.0, 8.5);
    b.segments.emplace_back(20.0 * i + 9.0, 10.0);
  }
  spec.speakers = {a, b};
  return spec;
}

/// Fifty 2-second same-speaker segments; the batching-mode comparison uses
/// this shape (many short segments with shared context).
inline MixtureSpec fifty_segment_fixture() {
  MixtureSpec spec;
  spec.duration = 180.0;
  spec.channels = 4;
  spec.seed = 77777;
  spec.steering = Steering::kDelays;
  spec.reverb_t60 = 0.0;
  spec.noise_snr = 20.0;
  SpeakerLayout a{"spk0", {}};
  for (int i = 0; i < 50; ++i) {
    a.segments.emplace_back(3.5 * i + 1.0, 2.0);
  }
  spec.speakers = {a};
  return spec;
}

}  // namespace gss::synthbench

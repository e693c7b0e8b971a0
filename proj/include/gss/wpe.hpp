#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "gss/common.hpp"
#include "gss/numerics.hpp"
#include "gss/parallel.hpp"
#include "gss/stft.hpp"

namespace gss::wpe {

struct WpeConfig {
  int taps = 10;
  int delay = 2;
  int iterations = 3;
  int psd_context = 0;
  double regularization = 1e-10;

  void validate() const {
    if (taps < 1 || delay < 1 || iterations < 1) {
      throw ConfigError("wpe: taps, delay and iterations must be >= 1");
    }
    if (psd_context < 0 || regularization < 0.0) {
      throw ConfigError("wpe: psd_context and regularization must be >= 0");
    }
  }
};

namespace detail {

using RowMajorXcf =
    Eigen::Matrix<cfloat, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kPowerFloor = 1e-10;

// Mean channel power per frame, optionally smoothed over ±context frames.
inline void frame_powers(const RowMajorXcf& x, int context,
                         std::vector<float>& lambda) {
  const int64_t t_count = x.rows();
  lambda.resize(t_count);
  std::vector<double> p(t_count);
  for (int64_t t = 0; t < t_count; ++t) {
    p[t] = x.row(t).squaredNorm() / static_cast<double>(x.cols());
  }
  for (int64_t t = 0; t < t_count; ++t) {
    const int64_t lo = std::max<int64_t>(0, t - context);
    const int64_t hi = std::min<int64_t>(t_count - 1, t + context);
    double acc = 0.0;
    for (int64_t u = lo; u <= hi; ++u) acc += p[u];
    lambda[t] = static_cast<float>(
        std::max(kPowerFloor, acc / static_cast<double>(hi - lo + 1)));
  }
}

// One frequency bin: iteratively re-estimate the prediction filter from the
// inverse-power-weighted normal equations and subtract the predicted tail.
// `y` is the T×M observation block; rewritten in place.
inline void dereverberate_bin(cfloat* y, int64_t t_count, int m,
                              const WpeConfig& cfg, long f) {
  const int taps = cfg.taps;
  const int delay = cfg.delay;
  const int km = taps * m;
  Eigen::Map<RowMajorXcf> ymat(y, t_count, m);
  const RowMajorXcf observed = ymat;

  // Augmented rows [x̃_t | y_t]: the single gram Σ w·a·aᴴ then holds both the
  // history correlation R (top-left) and the cross term P (top-right).
  RowMajorXcf aug = RowMajorXcf::Zero(t_count, km + m);
  for (int64_t t = 0; t < t_count; ++t) {
    for (int k = 0; k < taps; ++k) {
      const int64_t src = t - delay - k;
      if (src < 0) continue;
      for (int c = 0; c < m; ++c) aug(t, k * m + c) = observed(src, c);
    }
    for (int c = 0; c < m; ++c) aug(t, km + c) = observed(t, c);
  }
  Eigen::Map<const RowMajorXcf, 0, Eigen::OuterStride<>> history(
      aug.data(), t_count, km, Eigen::OuterStride<>(km + m));

  std::vector<float> weights(t_count);
  std::vector<float> lambda;
  for (int it = 0; it < cfg.iterations; ++it) {
    frame_powers(ymat, cfg.psd_context, lambda);
    for (int64_t t = 0; t < t_count; ++t) weights[t] = 1.0f / lambda[t];
    const Eigen::MatrixXcd gram =
        numerics::weighted_gram(aug.data(), t_count, km + m, weights.data());
    const Eigen::MatrixXcd r =
        numerics::regularize(numerics::hermitize(gram.topLeftCorner(km, km)),
                             cfg.regularization);
    const Eigen::MatrixXcd p = gram.topRightCorner(km, m);
    const Eigen::MatrixXcd g = numerics::hermitian_solve(r, p, f);
    const RowMajorXcf g_conj = g.conjugate().cast<cfloat>();
    ymat.noalias() = observed - history * g_conj;
  }
}

}  // namespace detail

/// Multi-channel linear-prediction dereverberation, run independently per
/// frequency bin. Inputs too short for the filter history pass through with
/// a warning.
inline stft::SpectrogramTensor dereverberate(const stft::SpectrogramTensor& y,
                                             const WpeConfig& cfg) {
  cfg.validate();
  if (y.num_frames <= cfg.taps + cfg.delay) {
    log::warn("wpe: %lld frames <= taps+delay (%d), passing input through",
              (long long)y.num_frames, cfg.taps + cfg.delay);
    return y;
  }
  stft::SpectrogramTensor out = y;
  const int64_t block = y.num_frames * y.num_channels;
  parallel::parallel_for(y.num_bins, [&](int64_t f) {
    detail::dereverberate_bin(out.data.data() + f * block, y.num_frames,
                              y.num_channels, cfg, static_cast<long>(f));
  });
  return out;
}

/// Scales each (f, t) channel vector to unit Euclidean norm; near-zero
/// vectors stay near zero via an ε in the denominator.
inline stft::SpectrogramTensor unit_normalize(const stft::SpectrogramTensor& y) {
  stft::SpectrogramTensor out = y;
  const int m = y.num_channels;
  parallel::parallel_for(y.num_bins, [&](int64_t f) {
    cfloat* bin = out.data.data() + f * y.num_frames * m;
    for (int64_t t = 0; t < y.num_frames; ++t) {
      cfloat* p = bin + t * m;
      double norm_sq = 0.0;
      for (int c = 0; c < m; ++c) {
        norm_sq += std::norm(static_cast<cdouble>(p[c]));
      }
      const float scale = static_cast<float>(1.0 / (std::sqrt(norm_sq) + 1e-10));
      for (int c = 0; c < m; ++c) p[c] *= scale;
    }
  });
  return out;
}

}  // namespace gss::wpe

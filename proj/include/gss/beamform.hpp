#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "gss/cacgmm.hpp"
#include "gss/common.hpp"
#include "gss/numerics.hpp"
#include "gss/parallel.hpp"
#include "gss/stft.hpp"

namespace gss::beamform {

/// Per-frequency spatial covariances of the target class and of everything
/// else (interferers + noise class), each averaged over frames.
struct BeamformerStats {
  int num_bins = 0;
  int num_channels = 0;
  int64_t frame_count = 0;
  std::vector<Eigen::MatrixXcd> target;      // Φ_k(f)
  std::vector<Eigen::MatrixXcd> background;  // Φ_bg(f)
};

struct BeamformerFilter {
  int num_channels = 0;
  int ref_channel = 0;
  std::vector<Eigen::VectorXcd> h;  // per frequency
  int64_t zeroed_bins = 0;          // bins where tr(Φ_bg⁻¹Φ_k) vanished
};

/// Φ_k(f) = (1/T)·Σ_t γ_{t,f,k}·ỸỸᴴ and the complementary background
/// covariance over all other classes.
inline BeamformerStats accumulate_stats(const stft::SpectrogramTensor& y,
                                        const cacgmm::PosteriorTensor& gamma,
                                        int target) {
  if (gamma.num_bins != y.num_bins || gamma.num_frames != y.num_frames) {
    throw ShapeError("accumulate_stats: posterior does not match tensor");
  }
  if (target < 0 || target >= gamma.num_classes) {
    throw ShapeError(strformat("accumulate_stats: target class %d of %d",
                               target, gamma.num_classes));
  }
  const int f_count = y.num_bins;
  const int64_t t_count = y.num_frames;
  const int m = y.num_channels;
  const int k_count = gamma.num_classes;

  BeamformerStats stats;
  stats.num_bins = f_count;
  stats.num_channels = m;
  stats.frame_count = t_count;
  stats.target.assign(f_count, Eigen::MatrixXcd());
  stats.background.assign(f_count, Eigen::MatrixXcd());

  std::vector<double> target_mass(f_count, 0.0);
  parallel::parallel_for(f_count, [&](int64_t f) {
    const cfloat* yf = y.data.data() + f * t_count * m;
    const float* gf = gamma.gamma.data() + f * t_count * k_count;
    std::vector<float> wt(t_count), wb(t_count);
    double mass = 0.0;
    for (int64_t t = 0; t < t_count; ++t) {
      wt[t] = gf[t * k_count + target];
      float other = 0.0f;
      for (int k = 0; k < k_count; ++k) {
        if (k != target) other += gf[t * k_count + k];
      }
      wb[t] = other;
      mass += wt[t];
    }
    target_mass[f] = mass;
    const double inv_t = 1.0 / static_cast<double>(t_count);
    stats.target[f] = numerics::weighted_gram(yf, t_count, m, wt.data()) * inv_t;
    stats.background[f] =
        numerics::weighted_gram(yf, t_count, m, wb.data()) * inv_t;
  });

  double total_mass = 0.0;
  for (double v : target_mass) total_mass += v;
  if (total_mass <= 0.0) {
    throw DegenerateStatsError("accumulate_stats: target mask is all zero");
  }
  return stats;
}

/// Reference channel maximizing Σ_f Φ_k[m,m] / Σ_f Φ_bg[m,m]; ties resolve
/// to the lowest index.
inline int select_reference(const BeamformerStats& stats) {
  const int m = stats.num_channels;
  Eigen::VectorXd num = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd den = Eigen::VectorXd::Zero(m);
  for (int f = 0; f < stats.num_bins; ++f) {
    num += stats.target[f].diagonal().real();
    den += stats.background[f].diagonal().real();
  }
  int best = 0;
  double best_snr = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < m; ++c) {
    const double snr = num[c] / std::max(den[c], 1e-10);
    if (snr > best_snr) {
      best_snr = snr;
      best = c;
    }
  }
  return best;
}

/// h(f) = Φ_bg⁻¹Φ_k e_ref / tr(Φ_bg⁻¹Φ_k). Bins whose trace vanishes get a
/// zero filter and are counted.
inline BeamformerFilter mvdr(const BeamformerStats& stats, int ref) {
  const int m = stats.num_channels;
  if (ref < 0 || ref >= m) {
    throw ShapeError(strformat("mvdr: reference channel %d of %d", ref, m));
  }
  BeamformerFilter filter;
  filter.num_channels = m;
  filter.ref_channel = ref;
  filter.h.assign(stats.num_bins, Eigen::VectorXcd::Zero(m));

  std::vector<uint8_t> zeroed(stats.num_bins, 0);
  parallel::parallel_for(stats.num_bins, [&](int64_t f) {
    const Eigen::MatrixXcd c = numerics::hermitian_solve(
        numerics::regularize(numerics::hermitize(stats.background[f])),
        stats.target[f], static_cast<long>(f));
    const cdouble tr = c.trace();
    if (std::abs(tr) < 1e-10) {
      zeroed[f] = 1;
      return;
    }
    filter.h[f] = c.col(ref) / tr;
  });
  for (uint8_t z : zeroed) filter.zeroed_bins += z;
  return filter;
}

/// X̂_{t,f} = h(f)ᴴ Ỹ_{t,f}; result is a single-channel tensor.
inline stft::SpectrogramTensor apply(const BeamformerFilter& filter,
                                     const stft::SpectrogramTensor& y) {
  if (filter.num_channels != y.num_channels ||
      static_cast<int>(filter.h.size()) != y.num_bins) {
    throw ShapeError("beamform.apply: filter does not match tensor");
  }
  const int64_t t_count = y.num_frames;
  const int m = y.num_channels;
  stft::SpectrogramTensor out;
  out.config = y.config;
  out.num_bins = y.num_bins;
  out.num_frames = t_count;
  out.num_channels = 1;
  out.origin_samples = y.origin_samples;
  out.num_samples = y.num_samples;
  out.data.assign(static_cast<size_t>(y.num_bins) * t_count, cfloat{});

  using RowMajorXcf =
      Eigen::Matrix<cfloat, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  parallel::parallel_for(y.num_bins, [&](int64_t f) {
    Eigen::Map<const RowMajorXcf> yf(y.data.data() + f * t_count * m, t_count,
                                     m);
    Eigen::VectorXcf hf = filter.h[f].cast<cfloat>();
    Eigen::Map<Eigen::VectorXcf> of(out.data.data() + f * t_count, t_count);
    of.noalias() = yf * hf.conjugate();
  });
  return out;
}

}  // namespace gss::beamform

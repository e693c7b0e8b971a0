#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gss/common.hpp"
#include "gss/manifests.hpp"
#include "gss/numerics.hpp"
#include "gss/parallel.hpp"
#include "gss/stft.hpp"

namespace gss::cacgmm {

constexpr double kQuadraticFormFloor = 1e-10;
constexpr double kWeightFloor = 1e-10;

/// Mixture parameters: per-frequency class weights π_{f,k} and one shape
/// matrix B_{f,k} per (frequency, class), trace-normalized to M.
struct CacgmmState {
  int num_bins = 0;
  int num_classes = 0;
  int num_channels = 0;
  std::vector<double> weights;            // (F, K)
  std::vector<Eigen::MatrixXcd> shapes;   // (F, K) of M×M
  std::vector<std::string> class_list;

  double& weight(int f, int k) { return weights[f * num_classes + k]; }
  double weight(int f, int k) const { return weights[f * num_classes + k]; }
  Eigen::MatrixXcd& shape(int f, int k) { return shapes[f * num_classes + k]; }
  const Eigen::MatrixXcd& shape(int f, int k) const {
    return shapes[f * num_classes + k];
  }

  static CacgmmState uniform(int bins, int classes, int channels,
                             std::vector<std::string> labels) {
    CacgmmState s;
    s.num_bins = bins;
    s.num_classes = classes;
    s.num_channels = channels;
    s.class_list = std::move(labels);
    s.weights.assign(static_cast<size_t>(bins) * classes, 1.0 / classes);
    s.shapes.assign(static_cast<size_t>(bins) * classes,
                    Eigen::MatrixXcd::Identity(channels, channels));
    return s;
  }
};

/// Class posteriors γ over (F, T, K̃); zero wherever the class is inactive.
struct PosteriorTensor {
  int num_bins = 0;
  int64_t num_frames = 0;
  int num_classes = 0;
  std::vector<float> gamma;  // (F, T, K) row-major

  int64_t index(int f, int64_t t, int k) const {
    return (static_cast<int64_t>(f) * num_frames + t) * num_classes + k;
  }
  float at(int f, int64_t t, int k) const { return gamma[index(f, t, k)]; }
};

/// log A(y; B) for a unit-norm complex vector y:
/// −M·log(2π) + log((M−1)!) − log|B| − M·log(yᴴB⁻¹y).
inline double cacg_log_pdf(const numerics::CVector& y,
                           const numerics::HermitianMatrix& b) {
  const int m = static_cast<int>(y.size());
  if (b.rows() != m || b.cols() != m) {
    throw ShapeError("cacg_log_pdf: B does not match y");
  }
  numerics::InverseLogDet f;
  try {
    f = numerics::hermitian_inverse_logdet(b);
  } catch (const SingularMatrixError&) {
    f = numerics::hermitian_inverse_logdet(numerics::regularize(b));
  }
  const double quad =
      std::max(kQuadraticFormFloor, (y.adjoint() * f.inverse * y)(0, 0).real());
  return -m * std::log(2.0 * M_PI) + std::lgamma(m) - f.log_det -
         m * std::log(quad);
}

/// π_{t,f,k} = π_{f,k}·a_{t,k} / Σ_{k'} π_{f,k'}·a_{t,k'}. A frame with no
/// active class falls back to the noise class alone (or uniform when the
/// model has no noise class).
inline Eigen::VectorXd time_varying_weights(const Eigen::VectorXd& pi,
                                            const std::vector<uint8_t>& activity,
                                            int noise_index = -1) {
  const int k_count = static_cast<int>(pi.size());
  if (static_cast<int>(activity.size()) != k_count) {
    throw ShapeError("time_varying_weights: activity row does not match pi");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(k_count);
  double z = 0.0;
  for (int k = 0; k < k_count; ++k) {
    if (activity[k]) {
      out[k] = pi[k];
      z += pi[k];
    }
  }
  if (z <= 0.0) {
    if (noise_index >= 0 && noise_index < k_count) {
      out.setZero();
      out[noise_index] = 1.0;
    } else {
      out.setConstant(1.0 / k_count);
    }
    return out;
  }
  return out / z;
}

namespace detail {

using RowMajorXcf =
    Eigen::Matrix<cfloat, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ShapeKernels {
  numerics::Tensor<cfloat> binv;  // (F, K, M, M)
  std::vector<double> log_det;    // (F, K), log|B|
};

inline ShapeKernels invert_shapes(const CacgmmState& state) {
  const int f_count = state.num_bins;
  const int k_count = state.num_classes;
  const int m = state.num_channels;
  ShapeKernels out;
  out.binv = numerics::Tensor<cfloat>({f_count, k_count, m, m});
  out.log_det.assign(static_cast<size_t>(f_count) * k_count, 0.0);
  parallel::parallel_for(f_count, [&](int64_t f) {
    for (int k = 0; k < k_count; ++k) {
      numerics::InverseLogDet ild;
      try {
        ild = numerics::hermitian_inverse_logdet(state.shape(f, k),
                                                 static_cast<long>(f));
      } catch (const SingularMatrixError&) {
        ild = numerics::hermitian_inverse_logdet(
            numerics::regularize(state.shape(f, k)), static_cast<long>(f));
      }
      out.log_det[f * k_count + k] = ild.log_det;
      cfloat* dst = out.binv.data.data() +
                    ((static_cast<int64_t>(f) * k_count + k) * m) * m;
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < m; ++c) {
          dst[r * m + c] = static_cast<cfloat>(ild.inverse(r, c));
        }
      }
    }
  });
  return out;
}

// Quadratic forms q_{f,t,k} = Ỹᴴ B⁻¹ Ỹ for all bins at once, floored to
// stay positive. Routed through the cached contraction planner.
inline numerics::Tensor<float> quad_forms(const stft::SpectrogramTensor& y,
                                          const numerics::Tensor<cfloat>& y_conj,
                                          const numerics::Tensor<cfloat>& binv) {
  const int64_t f_count = y.num_bins;
  const int64_t t_count = y.num_frames;
  const int64_t m = y.num_channels;
  numerics::TensorView<cfloat> y_view({f_count, t_count, m}, y.data.data());
  numerics::Tensor<cfloat> qc = numerics::einsum<cfloat>(
      "ftm,fkmn,ftn->ftk", {numerics::TensorView<cfloat>(y_conj),
                            numerics::TensorView<cfloat>(binv), y_view});
  numerics::Tensor<float> q;
  q.shape = qc.shape;
  q.data.resize(qc.data.size());
  for (size_t i = 0; i < qc.data.size(); ++i) {
    q.data[i] =
        std::max(static_cast<float>(kQuadraticFormFloor), qc.data[i].real());
  }
  return q;
}

}  // namespace detail

struct EmResult {
  CacgmmState state;
  PosteriorTensor posteriors;
  std::vector<double> likelihood_trace;  // one entry per E-step
};

namespace detail {

// E-step over one frequency bin: fills the γ block (T×K) and returns the
// bin's log-likelihood Σ_t log Σ_k π_{t,f,k}·A(Ỹ; B_{f,k}). log_det_f holds
// log|B_{f,k}| for this bin's K classes.
inline double estep_bin(const CacgmmState& state,
                        const manifests::ActivityMatrix& activity, int f,
                        const double* log_det_f, const float* qf,
                        float* gamma_f) {
  const int k_count = state.num_classes;
  const int m = state.num_channels;
  const int64_t t_count = activity.frames;
  const double c0 = -m * std::log(2.0 * M_PI) + std::lgamma(m);
  constexpr float kNegInf = -std::numeric_limits<float>::infinity();

  // log q over the whole T×K block, vectorized
  Eigen::ArrayXf logq =
      Eigen::Map<const Eigen::ArrayXf>(qf, t_count * k_count).log();

  std::vector<double> log_pi(k_count);
  for (int k = 0; k < k_count; ++k) {
    log_pi[k] = std::log(std::max(kWeightFloor, state.weight(f, k)));
  }

  double ll = 0.0;
  Eigen::ArrayXf u(t_count * k_count);
  std::vector<double> lse(t_count);
  for (int64_t t = 0; t < t_count; ++t) {
    double z = 0.0;
    for (int k = 0; k < k_count; ++k) {
      if (activity.at(t, k)) z += state.weight(f, k);
    }
    double max_u = -std::numeric_limits<double>::infinity();
    const bool degenerate = z <= 0.0;
    for (int k = 0; k < k_count; ++k) {
      const int64_t i = t * k_count + k;
      bool active = activity.at(t, k) != 0;
      double lp;
      if (degenerate) {
        // no active class: fall back to the noise class alone
        active = activity.noise_index >= 0 ? k == activity.noise_index
                                           : true;
        lp = activity.noise_index >= 0 ? 0.0 : -std::log((double)k_count);
      } else {
        lp = log_pi[k] - std::log(z);
      }
      if (!active) {
        u[i] = kNegInf;
        continue;
      }
      const double val =
          lp + c0 - log_det_f[k] - m * static_cast<double>(logq[i]);
      u[i] = static_cast<float>(val);
      max_u = std::max(max_u, val);
    }
    double sum = 0.0;
    for (int k = 0; k < k_count; ++k) {
      const float v = u[t * k_count + k];
      if (v != kNegInf) sum += std::exp(static_cast<double>(v) - max_u);
    }
    lse[t] = max_u + std::log(sum);
    ll += lse[t];
  }
  for (int64_t t = 0; t < t_count; ++t) {
    for (int k = 0; k < k_count; ++k) {
      const int64_t i = t * k_count + k;
      gamma_f[i] = u[i] == kNegInf
                       ? 0.0f
                       : static_cast<float>(
                             std::exp(static_cast<double>(u[i]) - lse[t]));
    }
  }
  return ll;
}

}  // namespace detail

/// Guided EM fit. Each iteration runs one E-step and one M-step; a final
/// E-step leaves the returned posteriors consistent with the returned
/// parameters. The likelihood trace has iterations+1 entries.
inline EmResult em_fit(const stft::SpectrogramTensor& y,
                       const manifests::ActivityMatrix& activity,
                       int iterations = 20) {
  if (iterations < 1) throw ConfigError("cacgmm: iterations must be >= 1");
  if (activity.frames != y.num_frames) {
    throw ShapeError(strformat("cacgmm: activity has %lld frames, tensor %lld",
                               (long long)activity.frames,
                               (long long)y.num_frames));
  }
  const int f_count = y.num_bins;
  const int64_t t_count = y.num_frames;
  const int m = y.num_channels;
  const int k_count = activity.num_classes();

  EmResult result;
  result.state =
      CacgmmState::uniform(f_count, k_count, m, activity.classes);
  result.posteriors.num_bins = f_count;
  result.posteriors.num_frames = t_count;
  result.posteriors.num_classes = k_count;
  result.posteriors.gamma.assign(
      static_cast<size_t>(f_count) * t_count * k_count, 0.0f);

  numerics::Tensor<cfloat> y_conj({f_count, t_count, m});
  for (size_t i = 0; i < y.data.size(); ++i) y_conj.data[i] = std::conj(y.data[i]);

  CacgmmState& state = result.state;
  std::vector<double> bin_ll(f_count);
  for (int it = 0; it <= iterations; ++it) {
    detail::ShapeKernels kernels = detail::invert_shapes(state);
    numerics::Tensor<float> q = detail::quad_forms(y, y_conj, kernels.binv);

    parallel::parallel_for(f_count, [&](int64_t f) {
      bin_ll[f] = detail::estep_bin(
          state, activity, static_cast<int>(f),
          kernels.log_det.data() + f * k_count,
          q.data.data() + f * t_count * k_count,
          result.posteriors.gamma.data() + f * t_count * k_count);
    });
    double ll = 0.0;
    for (int f = 0; f < f_count; ++f) ll += bin_ll[f];
    result.likelihood_trace.push_back(ll);
    if (it == iterations) break;

    parallel::parallel_for(f_count, [&](int64_t f) {
      const cfloat* yf = y.data.data() + f * t_count * m;
      const float* qf = q.data.data() + f * t_count * k_count;
      const float* gf =
          result.posteriors.gamma.data() + f * t_count * k_count;
      std::vector<float> w(t_count);
      for (int k = 0; k < k_count; ++k) {
        double mass = 0.0;
        for (int64_t t = 0; t < t_count; ++t) {
          mass += gf[t * k_count + k];
        }
        if (mass <= 0.0) {
          // dead class at this bin: keep its shape, floor its weight
          state.weight(f, k) = kWeightFloor;
          continue;
        }
        for (int64_t t = 0; t < t_count; ++t) {
          w[t] = gf[t * k_count + k] / qf[t * k_count + k];
        }
        Eigen::MatrixXcd b =
            numerics::weighted_gram(yf, t_count, m, w.data()) *
            (static_cast<double>(m) / mass);
        b = numerics::hermitize(b);
        const double tr = b.trace().real();
        if (tr > 0.0) b *= static_cast<double>(m) / tr;
        state.shape(f, k) = numerics::regularize(b);
        state.weight(f, k) =
            std::max(kWeightFloor, mass / static_cast<double>(t_count));
      }
    });
  }
  return result;
}

/// Σ_{t,f} log Σ_k π_{t,f,k}·A(Ỹ_{t,f}; B_{f,k}) for fixed parameters.
inline double log_likelihood(const stft::SpectrogramTensor& y,
                             const CacgmmState& state,
                             const manifests::ActivityMatrix& activity) {
  if (activity.frames != y.num_frames ||
      activity.num_classes() != state.num_classes) {
    throw ShapeError("log_likelihood: inconsistent shapes");
  }
  const int f_count = y.num_bins;
  const int64_t t_count = y.num_frames;
  const int k_count = state.num_classes;

  numerics::Tensor<cfloat> y_conj({f_count, t_count, y.num_channels});
  for (size_t i = 0; i < y.data.size(); ++i) y_conj.data[i] = std::conj(y.data[i]);
  detail::ShapeKernels kernels = detail::invert_shapes(state);
  numerics::Tensor<float> q = detail::quad_forms(y, y_conj, kernels.binv);

  std::vector<double> bin_ll(f_count);
  parallel::parallel_for(f_count, [&](int64_t f) {
    std::vector<float> gamma_scratch(static_cast<size_t>(t_count) * k_count);
    bin_ll[f] = detail::estep_bin(state, activity, static_cast<int>(f),
                                  kernels.log_det.data() + f * k_count,
                                  q.data.data() + f * t_count * k_count,
                                  gamma_scratch.data());
  });
  double ll = 0.0;
  for (int f = 0; f < f_count; ++f) ll += bin_ll[f];
  return ll;
}

}  // namespace gss::cacgmm

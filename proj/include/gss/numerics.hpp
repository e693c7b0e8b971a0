#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "gss/common.hpp"
#include "gss/parallel.hpp"

namespace gss::numerics {

// A Hermitian matrix is carried as a dense complex matrix whose symmetry is
// maintained by the functions below. Covariance-style accumulations and
// solves run in double precision; bulk spectrogram tensors stay single.
using HermitianMatrix = Eigen::MatrixXcd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

constexpr double kDefaultRegEps = 1e-10;
constexpr double kEigenvalueFloorRatio = 1e-10;

/// (A + Aᴴ)/2. Throws ShapeError for non-square input.
inline HermitianMatrix hermitize(const CMatrix& a) {
  if (a.rows() != a.cols()) {
    throw ShapeError(strformat("hermitize: matrix is %ldx%ld, expected square",
                               (long)a.rows(), (long)a.cols()));
  }
  return 0.5 * (a + a.adjoint());
}

/// A + ε·(tr(A)/M)·I. Falls back to A + ε·I when the trace is not positive.
inline HermitianMatrix regularize(const HermitianMatrix& a,
                                  double eps = kDefaultRegEps) {
  const auto m = a.rows();
  double scale = a.trace().real() / static_cast<double>(m);
  if (!(scale > 0.0)) scale = 1.0;
  HermitianMatrix out = a;
  out.diagonal().array() += eps * scale;
  return out;
}

namespace detail {

struct EigenFloored {
  Eigen::MatrixXcd vectors;
  Eigen::VectorXd values;  // floored, all > 0
};

inline EigenFloored eigen_floor(const HermitianMatrix& a, long frequency) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(a);
  if (es.info() != Eigen::Success) {
    throw SingularMatrixError(
        strformat("eigendecomposition failed (f=%ld)", frequency), frequency);
  }
  Eigen::VectorXd ev = es.eigenvalues();
  const double emax = ev.maxCoeff();
  if (!(emax > 0.0) || !std::isfinite(emax)) {
    throw SingularMatrixError(
        strformat("matrix has no positive eigenvalue (f=%ld)", frequency),
        frequency);
  }
  const double floor = kEigenvalueFloorRatio * emax;
  return {es.eigenvectors(), ev.cwiseMax(floor)};
}

}  // namespace detail

/// Solves A·X = B for Hermitian positive definite A via Cholesky. When the
/// factorization fails, eigenvalues are floored at 1e-10 of the largest and
/// the solve retried; a matrix without positive eigenvalues raises
/// SingularMatrixError carrying the frequency index.
inline CMatrix hermitian_solve(const HermitianMatrix& a, const CMatrix& b,
                               long frequency = -1) {
  if (a.rows() != a.cols() || a.rows() != b.rows()) {
    throw ShapeError(strformat(
        "hermitian_solve: A is %ldx%ld, B has %ld rows", (long)a.rows(),
        (long)a.cols(), (long)b.rows()));
  }
  Eigen::LLT<CMatrix> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  auto ef = detail::eigen_floor(a, frequency);
  return ef.vectors *
         ef.values.cwiseInverse().asDiagonal() *
         (ef.vectors.adjoint() * b);
}

struct InverseLogDet {
  CMatrix inverse;
  double log_det = 0.0;
};

/// Inverse and log-determinant of a Hermitian PD matrix in one factorization,
/// with the same eigenvalue-flooring fallback as hermitian_solve.
inline InverseLogDet hermitian_inverse_logdet(const HermitianMatrix& a,
                                              long frequency = -1) {
  Eigen::LLT<CMatrix> llt(a);
  if (llt.info() == Eigen::Success) {
    double logdet = 0.0;
    const auto& l = llt.matrixLLT();
    for (Eigen::Index i = 0; i < l.rows(); ++i)
      logdet += std::log(l(i, i).real());
    InverseLogDet out;
    out.log_det = 2.0 * logdet;
    out.inverse = llt.solve(CMatrix::Identity(a.rows(), a.cols()));
    return out;
  }
  auto ef = detail::eigen_floor(a, frequency);
  InverseLogDet out;
  out.log_det = ef.values.array().log().sum();
  out.inverse = ef.vectors * ef.values.cwiseInverse().asDiagonal() *
                ef.vectors.adjoint();
  return out;
}

/// Σ_t w[t]·y_t·y_tᴴ over the rows of a (rows × cols, row-major complex
/// float), accumulated chunk-wise: each chunk is a single-precision GEMM,
/// chunk results are summed in double. Pass w == nullptr for unit weights.
/// Weights must be non-negative.
inline Eigen::MatrixXcd weighted_gram(const cfloat* a, int64_t rows, int cols,
                                      const float* w, int64_t chunk = 2048) {
  using RowMajorXcf =
      Eigen::Matrix<cfloat, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(cols, cols);
  Eigen::Matrix<cfloat, Eigen::Dynamic, Eigen::Dynamic> scaled;
  for (int64_t t0 = 0; t0 < rows; t0 += chunk) {
    const int64_t n = std::min<int64_t>(chunk, rows - t0);
    Eigen::Map<const RowMajorXcf> block(a + t0 * cols, n, cols);
    Eigen::Matrix<cfloat, Eigen::Dynamic, Eigen::Dynamic> g;
    if (w) {
      scaled = block;
      for (int64_t t = 0; t < n; ++t) {
        const float s = std::sqrt(std::max(0.0f, w[t0 + t]));
        scaled.row(t) *= s;
      }
      g.noalias() = scaled.adjoint() * scaled;
    } else {
      g.noalias() = block.adjoint() * block;
    }
    // (AᴴWA)ᵀ has entries Σ w·y_m·conj(y_n), the y·yᴴ convention.
    acc += g.transpose().cast<cdouble>();
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Tensor contraction planning (einsum with a cached evaluation path)
// ---------------------------------------------------------------------------

template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel()), T{});
  }
  Tensor(std::vector<int64_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {}

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
  }
};

/// Borrowed operand for contraction evaluation; the pointed-to data must
/// outlive the call.
template <typename T>
struct TensorView {
  std::vector<int64_t> shape;
  const T* data = nullptr;

  TensorView() = default;
  TensorView(std::vector<int64_t> s, const T* d) : shape(std::move(s)), data(d) {}
  TensorView(const Tensor<T>& t) : shape(t.shape), data(t.data.data()) {}
};

struct ParsedContractionSpec {
  std::vector<std::string> inputs;
  std::string output;
};

inline ParsedContractionSpec parse_contraction_spec(const std::string& spec) {
  const auto arrow = spec.find("->");
  if (arrow == std::string::npos) {
    throw ShapeError("contraction spec must contain '->': " + spec);
  }
  ParsedContractionSpec out;
  std::string lhs = spec.substr(0, arrow);
  out.output = spec.substr(arrow + 2);
  std::string cur;
  for (char c : lhs + ",") {
    if (c == ',') {
      out.inputs.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  std::erase_if(out.output,
                [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  auto check = [&](const std::string& s) {
    for (size_t i = 0; i < s.size(); ++i) {
      if (!std::isalpha(static_cast<unsigned char>(s[i]))) {
        throw ShapeError("contraction labels must be letters: " + spec);
      }
      if (s.find(s[i], i + 1) != std::string::npos) {
        throw ShapeError("repeated label within one operand: " + s);
      }
    }
  };
  for (const auto& s : out.inputs) check(s);
  check(out.output);
  for (char c : out.output) {
    bool found = false;
    for (const auto& s : out.inputs) found = found || s.find(c) != std::string::npos;
    if (!found) {
      throw ShapeError(strformat("output label '%c' not present in inputs", c));
    }
  }
  return out;
}

struct ContractionStep {
  int lhs = -1;
  int rhs = -1;  // -1: unary reduce/permute of lhs
  std::string result;
  double macs = 0.0;
};

/// One evaluation recipe for a (spec, shapes) signature: the order of
/// pairwise contractions plus a multiply-accumulate estimate. Steps index an
/// evolving operand list; each step removes its operands and appends its
/// result at the end.
struct ContractionPlan {
  std::string key;
  ParsedContractionSpec spec;
  std::vector<std::vector<int64_t>> shapes;
  std::map<char, int64_t> extents;
  std::vector<ContractionStep> steps;
  double flop_estimate = 0.0;  // total multiply-accumulate count
};

namespace detail {

inline std::string shape_signature(const std::string& spec,
                                   const std::vector<std::vector<int64_t>>& shapes) {
  std::string key = spec;
  key += '|';
  for (const auto& s : shapes) {
    for (size_t i = 0; i < s.size(); ++i) {
      key += std::to_string(s[i]);
      if (i + 1 < s.size()) key += 'x';
    }
    key += ';';
  }
  return key;
}

inline double subs_macs(const std::string& a, const std::string& b,
                        const std::map<char, int64_t>& extents) {
  double cost = 1.0;
  for (char c : a) cost *= static_cast<double>(extents.at(c));
  for (char c : b) {
    if (a.find(c) == std::string::npos) cost *= static_cast<double>(extents.at(c));
  }
  return cost;
}

// Result subscript of contracting subs[i] with subs[j]: keeps every label
// still needed by another operand or the output, laid out as
// [shared-kept, lhs-only, rhs-only].
inline std::string step_result(const std::vector<std::string>& subs, size_t i,
                               size_t j, const std::string& output) {
  std::string needed = output;
  for (size_t k = 0; k < subs.size(); ++k) {
    if (k == i || k == j) continue;
    needed += subs[k];
  }
  const std::string& a = subs[i];
  const std::string& b = subs[j];
  auto in = [](const std::string& s, char c) {
    return s.find(c) != std::string::npos;
  };
  std::string batch, free_l, free_r;
  for (char c : a) {
    if (in(b, c)) {
      if (in(needed, c)) batch += c;
    } else if (in(needed, c)) {
      free_l += c;
    }
  }
  for (char c : b) {
    if (!in(a, c) && in(needed, c)) free_r += c;
  }
  return batch + free_l + free_r;
}

struct SearchState {
  std::vector<ContractionStep> best_steps;
  double best_cost = std::numeric_limits<double>::infinity();
};

inline void search_orders(std::vector<std::string>& subs,
                          std::vector<ContractionStep>& steps, double cost,
                          const std::string& output,
                          const std::map<char, int64_t>& extents,
                          SearchState& state) {
  if (subs.size() == 1) {
    if (cost < state.best_cost) {
      state.best_cost = cost;
      state.best_steps = steps;
    }
    return;
  }
  for (size_t i = 0; i < subs.size(); ++i) {
    for (size_t j = i + 1; j < subs.size(); ++j) {
      const double step_cost = subs_macs(subs[i], subs[j], extents);
      if (cost + step_cost >= state.best_cost) continue;
      const std::string result = step_result(subs, i, j, output);
      std::vector<std::string> next = subs;
      next.erase(next.begin() + j);
      next.erase(next.begin() + i);
      next.push_back(result);
      steps.push_back({static_cast<int>(i), static_cast<int>(j), result,
                       step_cost});
      search_orders(next, steps, cost + step_cost, output, extents, state);
      steps.pop_back();
    }
  }
}

// Greedy fallback for many operands: repeatedly contract the cheapest pair.
// With the pipeline's M < F < T extent ordering this picks the same path the
// exhaustive search would.
inline void greedy_order(std::vector<std::string> subs,
                         std::vector<ContractionStep>& steps, double& cost,
                         const std::string& output,
                         const std::map<char, int64_t>& extents) {
  while (subs.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    size_t bi = 0, bj = 1;
    for (size_t i = 0; i < subs.size(); ++i) {
      for (size_t j = i + 1; j < subs.size(); ++j) {
        const double c = subs_macs(subs[i], subs[j], extents);
        if (c < best) {
          best = c;
          bi = i;
          bj = j;
        }
      }
    }
    const std::string result = step_result(subs, bi, bj, output);
    steps.push_back({static_cast<int>(bi), static_cast<int>(bj), result, best});
    cost += best;
    subs.erase(subs.begin() + bj);
    subs.erase(subs.begin() + bi);
    subs.push_back(result);
  }
}

}  // namespace detail

/// Builds a plan without touching the cache. Exhaustive search over
/// contraction orders up to 5 operands, greedy beyond that.
inline ContractionPlan build_contraction_plan(
    const std::string& spec, const std::vector<std::vector<int64_t>>& shapes) {
  ContractionPlan plan;
  plan.spec = parse_contraction_spec(spec);
  plan.shapes = shapes;
  plan.key = detail::shape_signature(spec, shapes);
  if (plan.spec.inputs.size() != shapes.size()) {
    throw ShapeError(strformat("spec has %zu operands, got %zu shapes",
                               plan.spec.inputs.size(), shapes.size()));
  }
  for (size_t i = 0; i < shapes.size(); ++i) {
    if (plan.spec.inputs[i].size() != shapes[i].size()) {
      throw ShapeError(strformat("operand %zu: %zu labels but rank %zu", i,
                                 plan.spec.inputs[i].size(), shapes[i].size()));
    }
    for (size_t d = 0; d < shapes[i].size(); ++d) {
      const char label = plan.spec.inputs[i][d];
      auto [it, inserted] = plan.extents.emplace(label, shapes[i][d]);
      if (!inserted && it->second != shapes[i][d]) {
        throw ShapeError(strformat(
            "axis '%c' has extent %lld in operand %zu but %lld elsewhere",
            label, (long long)shapes[i][d], i, (long long)it->second));
      }
    }
  }

  std::vector<std::string> subs = plan.spec.inputs;
  double cost = 0.0;
  if (subs.size() >= 2) {
    if (subs.size() <= 5) {
      detail::SearchState state;
      std::vector<ContractionStep> steps;
      detail::search_orders(subs, steps, 0.0, plan.spec.output, plan.extents,
                            state);
      plan.steps = std::move(state.best_steps);
      cost = state.best_cost;
      // replay to find the final subscript
      for (const auto& st : plan.steps) {
        subs.erase(subs.begin() + st.rhs);
        subs.erase(subs.begin() + st.lhs);
        subs.push_back(st.result);
      }
    } else {
      detail::greedy_order(subs, plan.steps, cost, plan.spec.output,
                           plan.extents);
      for (const auto& st : plan.steps) {
        subs.erase(subs.begin() + st.rhs);
        subs.erase(subs.begin() + st.lhs);
        subs.push_back(st.result);
      }
    }
  }
  if (subs.size() == 1 && subs[0] != plan.spec.output) {
    plan.steps.push_back({0, -1, plan.spec.output, 0.0});
  }
  plan.flop_estimate = cost;
  return plan;
}

struct PlanCacheStats {
  uint64_t computed = 0;
  uint64_t hits = 0;
  uint64_t entries = 0;
};

/// Process-wide plan cache keyed by (spec, shapes). A plan is computed at
/// most once per signature; lookups are serialized so concurrent callers see
/// insert-once semantics.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  std::shared_ptr<const ContractionPlan> get(
      const std::string& spec, const std::vector<std::vector<int64_t>>& shapes) {
    const std::string key = detail::shape_signature(spec, shapes);
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key);
    if (it != map_.end()) {
      ++hits_;
      return it->second;
    }
    auto plan = std::make_shared<const ContractionPlan>(
        build_contraction_plan(spec, shapes));
    ++computed_;
    map_.emplace(key, plan);
    return plan;
  }

  PlanCacheStats stats() const {
    std::lock_guard<std::mutex> lock(mu_);
    return {computed_, hits_, static_cast<uint64_t>(map_.size())};
  }

  void reset() {
    std::lock_guard<std::mutex> lock(mu_);
    map_.clear();
    computed_ = 0;
    hits_ = 0;
  }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<const ContractionPlan>> map_;
  uint64_t computed_ = 0;
  uint64_t hits_ = 0;
};

inline std::shared_ptr<const ContractionPlan> plan_contraction(
    const std::string& spec, const std::vector<std::vector<int64_t>>& shapes) {
  return PlanCache::instance().get(spec, shapes);
}

namespace detail {

template <typename T>
void permute_copy(const T* src, const std::vector<int64_t>& shape,
                  const std::vector<int>& perm, T* dst) {
  const int r = static_cast<int>(shape.size());
  if (r == 0) {
    dst[0] = src[0];
    return;
  }
  std::vector<int64_t> in_strides(r);
  int64_t s = 1;
  for (int i = r - 1; i >= 0; --i) {
    in_strides[i] = s;
    s *= shape[i];
  }
  std::vector<int64_t> out_shape(r), stride_for_out(r);
  for (int i = 0; i < r; ++i) {
    out_shape[i] = shape[perm[i]];
    stride_for_out[i] = in_strides[perm[i]];
  }
  std::vector<int64_t> idx(r, 0);
  const int64_t inner_n = out_shape[r - 1];
  const int64_t inner_s = stride_for_out[r - 1];
  int64_t out_off = 0;
  int64_t src_base = 0;
  while (true) {
    const T* sp = src + src_base;
    if (inner_s == 1) {
      std::copy(sp, sp + inner_n, dst + out_off);
    } else {
      for (int64_t j = 0; j < inner_n; ++j) dst[out_off + j] = sp[j * inner_s];
    }
    out_off += inner_n;
    int ax = r - 2;
    while (ax >= 0) {
      ++idx[ax];
      src_base += stride_for_out[ax];
      if (idx[ax] < out_shape[ax]) break;
      src_base -= stride_for_out[ax] * out_shape[ax];
      idx[ax] = 0;
      --ax;
    }
    if (ax < 0) break;
  }
}

template <typename T>
struct Slab {
  std::string subs;
  std::vector<int64_t> shape;
  const T* ptr = nullptr;          // borrowed when owned is empty
  std::vector<T> owned;

  const T* data() const { return owned.empty() ? ptr : owned.data(); }
  int64_t numel() const {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
  }
};

template <typename T>
Slab<T> permute_slab(const Slab<T>& in, const std::string& new_subs) {
  if (in.subs == new_subs) {
    Slab<T> out;
    out.subs = in.subs;
    out.shape = in.shape;
    out.ptr = in.data();
    return out;
  }
  std::vector<int> perm(new_subs.size());
  std::vector<int64_t> new_shape(new_subs.size());
  for (size_t i = 0; i < new_subs.size(); ++i) {
    const auto pos = in.subs.find(new_subs[i]);
    perm[i] = static_cast<int>(pos);
    new_shape[i] = in.shape[pos];
  }
  Slab<T> out;
  out.subs = new_subs;
  out.shape = std::move(new_shape);
  out.owned.resize(static_cast<size_t>(in.numel()));
  permute_copy(in.data(), in.shape, perm, out.owned.data());
  return out;
}

// Sum over every axis of `in` that is absent from keep_subs, then lay the
// result out in keep_subs order.
template <typename T>
Slab<T> reduce_slab(const Slab<T>& in, const std::string& keep_subs) {
  std::string dropped;
  for (char c : in.subs) {
    if (keep_subs.find(c) == std::string::npos) dropped += c;
  }
  Slab<T> arranged = permute_slab(in, keep_subs + dropped);
  Slab<T> out;
  out.subs = keep_subs;
  out.shape.assign(arranged.shape.begin(),
                   arranged.shape.begin() + keep_subs.size());
  if (dropped.empty()) {
    if (!arranged.owned.empty()) {
      out.owned = std::move(arranged.owned);
    } else {
      out.owned.assign(arranged.data(), arranged.data() + arranged.numel());
    }
    return out;
  }
  int64_t keep_n = 1, drop_n = 1;
  for (size_t i = 0; i < arranged.shape.size(); ++i) {
    if (i < keep_subs.size()) keep_n *= arranged.shape[i];
    else drop_n *= arranged.shape[i];
  }
  out.owned.assign(static_cast<size_t>(keep_n), T{});
  const T* src = arranged.data();
  for (int64_t i = 0; i < keep_n; ++i) {
    T acc{};
    const T* row = src + i * drop_n;
    for (int64_t j = 0; j < drop_n; ++j) acc += row[j];
    out.owned[i] = acc;
  }
  return out;
}

template <typename T>
using RowMajorMat =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Slab<T> pairwise_contract(const Slab<T>& lhs, const Slab<T>& rhs,
                          const std::string& result) {
  auto in = [](const std::string& s, char c) {
    return s.find(c) != std::string::npos;
  };
  // Axes only on one side and not in the result are pre-summed.
  std::string keep_l, keep_r;
  for (char c : lhs.subs) {
    if (in(rhs.subs, c) || in(result, c)) keep_l += c;
  }
  for (char c : rhs.subs) {
    if (in(lhs.subs, c) || in(result, c)) keep_r += c;
  }
  Slab<T> l = keep_l.size() == lhs.subs.size() ? permute_slab(lhs, lhs.subs)
                                               : reduce_slab(lhs, keep_l);
  Slab<T> r = keep_r.size() == rhs.subs.size() ? permute_slab(rhs, rhs.subs)
                                               : reduce_slab(rhs, keep_r);

  std::string batch, free_l, free_r, contract;
  for (char c : result) {
    const bool inl = in(l.subs, c), inr = in(r.subs, c);
    if (inl && inr) batch += c;
    else if (inl) free_l += c;
    else free_r += c;
  }
  for (char c : l.subs) {
    if (in(r.subs, c) && !in(result, c)) contract += c;
  }

  Slab<T> lp = permute_slab(l, batch + free_l + contract);
  Slab<T> rp = permute_slab(r, batch + contract + free_r);

  auto extent_of = [&](const Slab<T>& s, char c) {
    return s.shape[s.subs.find(c)];
  };
  int64_t nb = 1, nl = 1, nc = 1, nr = 1;
  std::vector<int64_t> out_shape;
  for (char c : batch) {
    nb *= extent_of(lp, c);
    out_shape.push_back(extent_of(lp, c));
  }
  for (char c : free_l) {
    nl *= extent_of(lp, c);
    out_shape.push_back(extent_of(lp, c));
  }
  for (char c : contract) nc *= extent_of(lp, c);
  for (char c : free_r) {
    nr *= extent_of(rp, c);
    out_shape.push_back(extent_of(rp, c));
  }
  if (nc == 0) nc = 1;

  Slab<T> out;
  out.subs = result;
  out.shape = std::move(out_shape);
  out.owned.resize(static_cast<size_t>(nb * nl * nr));
  const T* lv = lp.data();
  const T* rv = rp.data();
  T* ov = out.owned.data();
  if (nl * nr * nc <= 128) {
    for (int64_t b = 0; b < nb; ++b) {
      const T* lb = lv + b * nl * nc;
      const T* rb = rv + b * nc * nr;
      T* ob = ov + b * nl * nr;
      for (int64_t i = 0; i < nl; ++i) {
        for (int64_t j = 0; j < nr; ++j) {
          T acc{};
          for (int64_t k = 0; k < nc; ++k) acc += lb[i * nc + k] * rb[k * nr + j];
          ob[i * nr + j] = acc;
        }
      }
    }
  } else {
    // Per-batch outputs are disjoint, so threading keeps results identical
    // to the serial order.
    const int threads = nb > 1 && nl * nr * nc >= 32768 ? 0 : 1;
    parallel::parallel_for(
        nb,
        [&](int64_t b) {
          Eigen::Map<const RowMajorMat<T>> lm(lv + b * nl * nc, nl, nc);
          Eigen::Map<const RowMajorMat<T>> rm(rv + b * nc * nr, nc, nr);
          Eigen::Map<RowMajorMat<T>> om(ov + b * nl * nr, nl, nr);
          om.noalias() = lm * rm;
        },
        threads);
  }
  return out;
}

}  // namespace detail

/// Evaluates a contraction plan over the given operands.
template <typename T>
Tensor<T> evaluate_contraction(const ContractionPlan& plan,
                               const std::vector<TensorView<T>>& inputs) {
  if (inputs.size() != plan.spec.inputs.size()) {
    throw ShapeError("evaluate_contraction: operand count mismatch");
  }
  std::vector<detail::Slab<T>> work;
  work.reserve(inputs.size() + plan.steps.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape != plan.shapes[i]) {
      throw ShapeError(strformat("operand %zu shape differs from plan", i));
    }
    detail::Slab<T> s;
    s.subs = plan.spec.inputs[i];
    s.shape = inputs[i].shape;
    s.ptr = inputs[i].data;
    work.push_back(std::move(s));
  }
  for (const auto& step : plan.steps) {
    if (step.rhs < 0) {
      auto reduced = detail::reduce_slab(work[step.lhs], step.result);
      work.erase(work.begin() + step.lhs);
      work.push_back(std::move(reduced));
    } else {
      auto res = detail::pairwise_contract(work[step.lhs], work[step.rhs],
                                           step.result);
      work.erase(work.begin() + step.rhs);
      work.erase(work.begin() + step.lhs);
      work.push_back(std::move(res));
    }
  }
  detail::Slab<T>& last = work.back();
  Tensor<T> out;
  out.shape = last.shape;
  if (!last.owned.empty()) {
    out.data = std::move(last.owned);
  } else {
    out.data.assign(last.data(), last.data() + last.numel());
  }
  return out;
}

/// Cached-plan einsum.
template <typename T>
Tensor<T> einsum(const std::string& spec,
                 const std::vector<TensorView<T>>& inputs) {
  std::vector<std::vector<int64_t>> shapes;
  shapes.reserve(inputs.size());
  for (const auto& t : inputs) shapes.push_back(t.shape);
  auto plan = plan_contraction(spec, shapes);
  return evaluate_contraction(*plan, inputs);
}

/// Multiply-accumulate count of the strict left-to-right order, for
/// comparison against a searched plan's estimate.
inline double naive_flop_estimate(const std::string& spec,
                                  const std::vector<std::vector<int64_t>>& shapes) {
  auto parsed = parse_contraction_spec(spec);
  std::map<char, int64_t> extents;
  for (size_t i = 0; i < shapes.size(); ++i) {
    for (size_t d = 0; d < shapes[i].size(); ++d) {
      extents.emplace(parsed.inputs[i][d], shapes[i][d]);
    }
  }
  std::vector<std::string> subs = parsed.inputs;
  double cost = 0.0;
  while (subs.size() > 1) {
    cost += detail::subs_macs(subs[0], subs[1], extents);
    const std::string result = detail::step_result(subs, 0, 1, parsed.output);
    subs.erase(subs.begin(), subs.begin() + 2);
    subs.insert(subs.begin(), result);
  }
  return cost;
}

/// Naive reference evaluation: contracts operands strictly left to right.
/// Kept independent of the planner for verification.
template <typename T>
Tensor<T> einsum_naive(const std::string& spec,
                       const std::vector<TensorView<T>>& inputs) {
  auto parsed = parse_contraction_spec(spec);
  std::vector<detail::Slab<T>> work;
  for (size_t i = 0; i < inputs.size(); ++i) {
    detail::Slab<T> s;
    s.subs = parsed.inputs[i];
    s.shape = inputs[i].shape;
    s.ptr = inputs[i].data;
    work.push_back(std::move(s));
  }
  std::vector<std::string> subs = parsed.inputs;
  while (work.size() > 1) {
    const std::string result = detail::step_result(subs, 0, 1, parsed.output);
    auto res = detail::pairwise_contract(work[0], work[1], result);
    work.erase(work.begin(), work.begin() + 2);
    work.insert(work.begin(), std::move(res));
    subs.erase(subs.begin(), subs.begin() + 2);
    subs.insert(subs.begin(), result);
  }
  auto final = detail::reduce_slab(work[0], parsed.output);
  Tensor<T> out;
  out.shape = final.shape;
  if (!final.owned.empty()) {
    out.data = std::move(final.owned);
  } else {
    out.data.assign(final.data(), final.data() + final.numel());
  }
  return out;
}

}  // namespace gss::numerics

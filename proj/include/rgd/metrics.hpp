#pragma once

// Instrumentation over attack trajectories: boundary ratio, robust accuracy,
// per-step perturbation change, coefficient histograms and step gains.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rgd/errors.hpp"
#include "rgd/model.hpp"
#include "rgd/tensor.hpp"
#include "rgd/trace.hpp"

namespace rgd {

/// Coordinates within this distance of ±eps count as on the boundary.
inline double default_boundary_tol(double eps) { return 1e-6 * eps; }

/// Fraction of coordinates with |δ_i| ≥ eps − tol.
inline double boundary_ratio(std::span<const double> delta_c, double eps, double tol) {
  if (delta_c.empty()) throw DomainError("boundary_ratio: empty perturbation");
  if (linf_norm(delta_c) > eps + tol) {
    throw DomainError("boundary_ratio: perturbation leaves the eps ball");
  }
  std::size_t on = 0;
  for (double v : delta_c) {
    if (std::abs(v) >= eps - tol) ++on;
  }
  return static_cast<double>(on) / static_cast<double>(delta_c.size());
}

inline double boundary_ratio(const Tensor& delta_c, double eps, double tol) {
  return boundary_ratio(delta_c.data(), eps, tol);
}

/// Fraction of samples whose adversarial input is still classified correctly.
inline double robust_accuracy(const MlpModel& model, std::span<const int> labels,
                              std::span<const AttackResult> results) {
  if (labels.size() != results.size()) {
    throw DimensionError("robust_accuracy: " + std::to_string(results.size()) + " results for " +
                         std::to_string(labels.size()) + " samples");
  }
  if (labels.empty()) throw DomainError("robust_accuracy: no samples");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predict(model, results[i].adversarial.data()) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

/// Robust accuracy when each sample is perturbed by its step-`t` clipped delta.
inline double robust_accuracy_at_step(const MlpModel& model, const Tensor& inputs, std::span<const int> labels,
                                      std::span<const AttackResult> results, std::size_t t) {
  if (labels.size() != results.size() || inputs.rows() != labels.size()) {
    throw DimensionError("robust_accuracy_at_step: sample count mismatch");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto x = inputs.row(i);
    const auto& d = results[i].trace.at(t).delta_clipped;
    std::vector<double> xa(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) xa[j] = x[j] + d[j];
    if (predict(model, xa) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

/// Entry t-1 is the mean over samples of mean_i |δ_c^t − δ_c^{t-1}|, t = 1..T.
inline std::vector<double> mean_step_change(std::span<const std::vector<StepTrace>> traces) {
  if (traces.empty()) return {};
  const std::size_t len = traces.front().size();
  for (const auto& tr : traces) {
    if (tr.size() != len) throw DimensionError("mean_step_change: ragged traces");
  }
  if (len < 2) return {};
  std::vector<double> out(len - 1, 0.0);
  for (const auto& tr : traces) {
    for (std::size_t t = 1; t < len; ++t) {
      const auto& a = tr[t].delta_clipped;
      const auto& b = tr[t - 1].delta_clipped;
      require_same_shape(a, b, "mean_step_change");
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
      out[t - 1] += s / static_cast<double>(a.size());
    }
  }
  for (double& v : out) v /= static_cast<double>(traces.size());
  return out;
}

inline std::vector<double> mean_step_change(std::span<const AttackResult> results) {
  std::vector<std::vector<StepTrace>> traces;
  traces.reserve(results.size());
  for (const auto& r : results) traces.push_back(r.trace);
  return mean_step_change(std::span<const std::vector<StepTrace>>(traces));
}

/// Mean over samples of the boundary ratio recorded at step t.
inline double mean_boundary_ratio_at_step(std::span<const AttackResult> results, std::size_t t) {
  if (results.empty()) throw DomainError("mean_boundary_ratio_at_step: no results");
  double s = 0.0;
  for (const auto& r : results) s += r.trace.at(t).boundary_ratio;
  return s / static_cast<double>(results.size());
}

struct HistogramSpec {
  std::size_t bin_count = 50;
  double eps = 0.0;  // bins cover [-eps, eps]

  void validate() const {
    if (bin_count < 2) throw ConfigError("histogram needs at least two bins");
    if (!(eps > 0.0)) throw ConfigError("histogram range must be positive");
  }
  double bin_width() const { return 2.0 * eps / static_cast<double>(bin_count); }
  double bin_lo(std::size_t b) const { return -eps + bin_width() * static_cast<double>(b); }
  double bin_hi(std::size_t b) const {
    return b + 1 == bin_count ? eps : -eps + bin_width() * static_cast<double>(b + 1);
  }
};

/// Adds the coordinates of `delta_c` to `counts` (which must have
/// spec.bin_count entries). Bins are [lo, hi) except the last, which is closed.
inline void accumulate_histogram(std::span<const double> delta_c, const HistogramSpec& spec,
                                 std::vector<std::size_t>& counts) {
  spec.validate();
  if (counts.size() != spec.bin_count) throw DimensionError("histogram: count vector has wrong size");
  for (double v : delta_c) {
    if (!(v >= -spec.eps && v <= spec.eps)) {
      throw DomainError("histogram: entry " + std::to_string(v) + " outside [-eps, eps]");
    }
    auto b = static_cast<std::size_t>((v + spec.eps) / spec.bin_width());
    if (b >= spec.bin_count) b = spec.bin_count - 1;
    counts[b] += 1;
  }
}

inline std::vector<std::size_t> perturbation_histogram(std::span<const double> delta_c, const HistogramSpec& spec) {
  std::vector<std::size_t> counts(spec.bin_count, 0);
  accumulate_histogram(delta_c, spec, counts);
  return counts;
}

inline std::vector<std::size_t> perturbation_histogram(const Tensor& delta_c, const HistogramSpec& spec) {
  return perturbation_histogram(delta_c.data(), spec);
}

/// g(t+1) − g(t) for consecutive trace rows.
inline std::vector<double> adversarial_gain_series(std::span<const StepTrace> trace) {
  if (trace.size() < 2) throw DomainError("adversarial_gain_series: trace needs at least two rows");
  std::vector<double> out(trace.size() - 1);
  for (std::size_t t = 0; t + 1 < trace.size(); ++t) out[t] = trace[t + 1].loss - trace[t].loss;
  return out;
}

}  // namespace rgd

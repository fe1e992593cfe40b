#pragma once

// Numerical checks of the step-gain bound for the one-hidden-layer ReLU model
// under the MSE loss g(x) = ½ (w1ᵀ relu(w2 x) − y*)²:
//
//   g(x+δ_c^{t+1}) − g(x+δ_c^t)
//       ≤ (√2/2) · |w1|ᵀ |w2| |δ_c^{t+1} − δ_c^t| · (√g(x+δ_c^{t+1}) + √g(x+δ_c^t))
//
// and of the two inequalities it is built from: the function-difference bound
// |f(x+a) − f(x+b)| ≤ |w1|ᵀ|w2||a − b| and the averaged-residual bound
// |½f(x+a) + ½f(x+b) − y*| ≤ (√2/2)(√g(x+a) + √g(x+b)).
//
// The averaged-residual bound takes one term from each point of the ordered
// pair (a, b).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rgd/csv.hpp"
#include "rgd/errors.hpp"
#include "rgd/model.hpp"
#include "rgd/rng.hpp"
#include "rgd/tensor.hpp"
#include "rgd/trace.hpp"

namespace rgd {

/// w1 = w_plus + w_minus with w_plus ≥ 0 ≥ w_minus.
struct SignSplit {
  Tensor w_plus;
  Tensor w_minus;

  static SignSplit of(const Tensor& w1) {
    return {map_elementwise(w1, [](double v) { return 0.5 * (v + std::abs(v)); }),
            map_elementwise(w1, [](double v) { return 0.5 * (v - std::abs(v)); })};
  }
};

struct BoundReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = true;
  double slack = 0.0;  // rhs − lhs

  static BoundReport make(double lhs, double rhs) {
    return {lhs, rhs, lhs <= rhs + 1e-9 * std::max(1.0, std::abs(rhs)), rhs - lhs};
  }

  /// Slack normalised by the tolerance scale; negative only on violation
  /// beyond rounding headroom.
  double relative_slack() const { return slack / std::max(1.0, std::abs(rhs)); }
};

namespace detail {

inline std::vector<double> offset(std::span<const double> x, const Tensor& d) {
  if (d.size() != x.size()) {
    throw DimensionError("theory: perturbation of length " + std::to_string(d.size()) + " for input of length " +
                         std::to_string(x.size()));
  }
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] + d[j];
  return out;
}

}  // namespace detail

/// |w1|ᵀ |w2| |a − b|, the Lipschitz-style scalar shared by the bounds.
inline double abs_weight_chain(const TheoryModel& model, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "abs_weight_chain");
  const std::size_t m = model.hidden_dim(), n = model.input_dim();
  if (a.size() != n) throw DimensionError("abs_weight_chain: perturbation length mismatch");
  double out = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += std::abs(model.w2(i, j)) * std::abs(a[j] - b[j]);
    out += std::abs(model.w1[i]) * row;
  }
  return out;
}

inline BoundReport theorem1_check(const TheoryModel& model, std::span<const double> x, double y_star,
                                  const Tensor& delta_c_t, const Tensor& delta_c_t1) {
  const double g0 = loss_theory(model, detail::offset(x, delta_c_t), y_star);
  const double g1 = loss_theory(model, detail::offset(x, delta_c_t1), y_star);
  const double chain = abs_weight_chain(model, delta_c_t1, delta_c_t);
  const double rhs = std::numbers::sqrt2 / 2.0 * chain * (std::sqrt(g1) + std::sqrt(g0));
  return BoundReport::make(g1 - g0, rhs);
}

inline BoundReport lemma1_check(const TheoryModel& model, std::span<const double> x, const Tensor& a,
                                const Tensor& b) {
  const double fa = forward_theory(model, detail::offset(x, a));
  const double fb = forward_theory(model, detail::offset(x, b));
  return BoundReport::make(std::abs(fa - fb), abs_weight_chain(model, a, b));
}

inline BoundReport lemma2_check(const TheoryModel& model, std::span<const double> x, double y_star,
                                const Tensor& a, const Tensor& b) {
  const double fa = forward_theory(model, detail::offset(x, a));
  const double fb = forward_theory(model, detail::offset(x, b));
  const double ga = 0.5 * (fa - y_star) * (fa - y_star);
  const double gb = 0.5 * (fb - y_star) * (fb - y_star);
  const double lhs = std::abs(0.5 * fa + 0.5 * fb - y_star);
  return BoundReport::make(lhs, std::numbers::sqrt2 / 2.0 * (std::sqrt(ga) + std::sqrt(gb)));
}

/// Theorem-1 report for every consecutive pair of a trajectory.
inline std::vector<BoundReport> step_gain_series(std::span<const StepTrace> trace, const TheoryModel& model,
                                                 std::span<const double> x, double y_star) {
  if (trace.size() < 2) throw DomainError("step_gain_series: trace needs at least two rows");
  std::vector<BoundReport> out;
  out.reserve(trace.size() - 1);
  for (std::size_t t = 0; t + 1 < trace.size(); ++t) {
    out.push_back(theorem1_check(model, x, y_star, trace[t].delta_clipped, trace[t + 1].delta_clipped));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Randomised campaign

/// One random problem: weights ~ N(0,1), x ~ U(−1,1)^n, y* ~ U(−2,2),
/// eps ~ U(0.01, 1), two perturbations uniform in the eps ball.
struct TheoryInstance {
  std::uint64_t id = 0;
  TheoryModel model;
  Tensor x;
  double y_star = 0.0;
  double eps = 0.0;
  Tensor delta_a;  // plays δ_c^t
  Tensor delta_b;  // plays δ_c^{t+1}
};

inline TheoryInstance make_theory_instance(std::uint64_t campaign_seed, std::uint64_t id, std::size_t max_hidden = 8,
                                           std::size_t max_input = 8) {
  Rng rng(derive_seed(campaign_seed, id));
  const std::size_t m = 1 + static_cast<std::size_t>(rng.below(max_hidden));
  const std::size_t n = 1 + static_cast<std::size_t>(rng.below(max_input));
  std::vector<double> w1(m), w2(m * n), x(n), a(n), b(n);
  for (double& v : w1) v = rng.normal();
  for (double& v : w2) v = rng.normal();
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  const double y_star = rng.uniform(-2.0, 2.0);
  const double eps = rng.uniform(0.01, 1.0);
  for (double& v : a) v = rng.uniform(-eps, eps);
  for (double& v : b) v = rng.uniform(-eps, eps);
  return {id,
          TheoryModel(Tensor::vector(std::move(w1)), Tensor({m, n}, std::move(w2))),
          Tensor::vector(std::move(x)),
          y_star,
          eps,
          Tensor::vector(std::move(a)),
          Tensor::vector(std::move(b))};
}

/// Full-precision text dump sufficient to rebuild the instance.
inline void write_reproducer(std::ostream& os, std::uint64_t campaign_seed, const TheoryInstance& inst,
                             const std::string& check, const BoundReport& rep) {
  auto dump = [&os](const char* key, const Tensor& t) {
    os << key;
    for (double v : t.data()) os << ' ' << fmt_hex(v);
    os << '\n';
  };
  os << "check " << check << '\n';
  os << "seed " << campaign_seed << '\n';
  os << "instance " << inst.id << '\n';
  os << "m " << inst.model.hidden_dim() << "\nn " << inst.model.input_dim() << '\n';
  dump("w1", inst.model.w1);
  dump("w2", inst.model.w2);
  dump("x", inst.x);
  os << "y_star " << fmt_hex(inst.y_star) << '\n';
  os << "eps " << fmt_hex(inst.eps) << '\n';
  dump("delta_t", inst.delta_a);
  dump("delta_t1", inst.delta_b);
  os << "lhs " << fmt_hex(rep.lhs) << "\nrhs " << fmt_hex(rep.rhs) << '\n';
}

struct CheckSummary {
  std::string name;
  std::uint64_t violations = 0;
  double worst_relative_slack = std::numeric_limits<double>::infinity();
  std::uint64_t worst_instance = 0;
};

struct CampaignReport {
  std::uint64_t instances = 0;
  std::vector<CheckSummary> checks;  // theorem1, lemma1, lemma2

  std::uint64_t total_violations() const {
    std::uint64_t v = 0;
    for (const auto& c : checks) v += c.violations;
    return v;
  }
};

/// Evaluates the three bounds on `n` random instances. When `reproducer_dir`
/// is set, each violation is written there as `violation_<check>_<id>.txt`.
inline CampaignReport run_theory_campaign(std::uint64_t n, std::uint64_t seed,
                                          const std::optional<std::filesystem::path>& reproducer_dir = std::nullopt) {
  CampaignReport rep;
  rep.instances = n;
  rep.checks = {{"theorem1"}, {"lemma1"}, {"lemma2"}};
  for (std::uint64_t id = 0; id < n; ++id) {
    const auto inst = make_theory_instance(seed, id);
    const auto x = inst.x.data();
    const BoundReport reports[3] = {theorem1_check(inst.model, x, inst.y_star, inst.delta_a, inst.delta_b),
                                    lemma1_check(inst.model, x, inst.delta_b, inst.delta_a),
                                    lemma2_check(inst.model, x, inst.y_star, inst.delta_b, inst.delta_a)};
    for (std::size_t c = 0; c < 3; ++c) {
      auto& s = rep.checks[c];
      const double rel = reports[c].relative_slack();
      if (rel < s.worst_relative_slack) {
        s.worst_relative_slack = rel;
        s.worst_instance = id;
      }
      if (!reports[c].satisfied) {
        ++s.violations;
        if (reproducer_dir) {
          std::filesystem::create_directories(*reproducer_dir);
          std::ofstream os(*reproducer_dir / ("violation_" + s.name + "_" + std::to_string(id) + ".txt"));
          write_reproducer(os, seed, inst, s.name, reports[c]);
        }
      }
    }
  }
  return rep;
}

}  // namespace rgd

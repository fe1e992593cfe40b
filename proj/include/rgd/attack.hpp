#pragma once

// L∞ attacks on a differentiable model. Three update rules share one driver:
//
//   SignPgd:  δ^{t+1} = δ_c^t + α·sign(∇g(x + δ_c^t))
//   RawPgd:   δ^{t+1} = δ_c^t + α·∇g(x + δ_c^t)
//   Rgd:      δ^{t+1} = δ^t   + α·∇g(x + δ_c^t)
//
// with δ_c^t = clamp(δ^t, −ε, ε). Gradients are always taken at the clipped
// point; only Rgd carries the unclipped accumulator forward.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rgd/csv.hpp"
#include "rgd/data.hpp"
#include "rgd/errors.hpp"
#include "rgd/metrics.hpp"
#include "rgd/model.hpp"
#include "rgd/parallel.hpp"
#include "rgd/rng.hpp"
#include "rgd/tensor.hpp"
#include "rgd/trace.hpp"

namespace rgd {

enum class UpdateRule { SignPgd, RawPgd, Rgd };
enum class InitKind { Zero, Uniform };

inline const char* to_string(UpdateRule r) {
  switch (r) {
    case UpdateRule::SignPgd: return "sign";
    case UpdateRule::RawPgd: return "raw";
    case UpdateRule::Rgd: return "rgd";
  }
  return "?";
}

inline const char* to_string(InitKind k) { return k == InitKind::Zero ? "zero" : "uniform"; }

/// Valid range for x + δ, e.g. [0, 1] for image data.
struct DomainBox {
  double lo = 0.0;
  double hi = 1.0;
};

struct AttackConfig {
  double eps = 8.0 / 255.0;
  double alpha = 2.0 / 255.0;
  std::size_t steps = 7;
  UpdateRule rule = UpdateRule::SignPgd;
  InitKind init = InitKind::Zero;
  std::optional<DomainBox> domain_clamp;
  std::uint64_t seed = 0;
  /// Steps 1..K use Rgd, the rest SignPgd starting from the clipped state.
  std::optional<std::size_t> hybrid_switch;
  /// Step size of the SignPgd tail of a hybrid run; defaults to alpha.
  std::optional<double> tail_alpha;

  /// eps == 0 is accepted and means the null attack (δ ≡ 0).
  void validate() const {
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw ConfigError("attack: eps must be finite and >= 0");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("attack: alpha must be positive");
    if (steps < 1) throw ConfigError("attack: steps must be >= 1");
    if (hybrid_switch && *hybrid_switch > steps) throw ConfigError("attack: hybrid switch beyond last step");
    if (tail_alpha && !(*tail_alpha > 0.0)) throw ConfigError("attack: tail alpha must be positive");
    if (domain_clamp && !(domain_clamp->lo < domain_clamp->hi)) throw ConfigError("attack: empty domain box");
  }
};

// ---------------------------------------------------------------------------
// Primitive operations

/// Entrywise clamp to [−eps, eps].
inline Tensor project_eps(const Tensor& delta, double eps) {
  if (!(eps > 0.0)) throw ConfigError("project_eps: eps must be positive");
  return map_elementwise(delta, [eps](double v) { return std::max(std::min(v, eps), -eps); });
}

/// Entrywise sign with sign(0) = 0.
inline Tensor sign_of(const Tensor& g) {
  return map_elementwise(g, [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Tensor init_delta(const AttackConfig& cfg, const Shape& shape) {
  Tensor out(shape);
  if (cfg.init == InitKind::Uniform && cfg.eps > 0.0) {
    Rng rng(cfg.seed);
    for (double& v : out.data()) v = rng.uniform_open(-cfg.eps, cfg.eps);
  }
  return out;
}

inline Tensor step_sign_pgd(const Tensor& delta_prev_clipped, const Tensor& grad, double alpha) {
  require_same_shape(delta_prev_clipped, grad, "step_sign_pgd");
  return zip_elementwise(delta_prev_clipped, grad, [alpha](double d, double g) {
    return g > 0.0 ? d + alpha : (g < 0.0 ? d - alpha : d);
  });
}

inline Tensor step_raw_pgd(const Tensor& delta_prev_clipped, const Tensor& grad, double alpha) {
  require_same_shape(delta_prev_clipped, grad, "step_raw_pgd");
  return zip_elementwise(delta_prev_clipped, grad, [alpha](double d, double g) { return d + alpha * g; });
}

/// `grad_at_clipped` must be evaluated at x + clamp(δ); the update lands on
/// the unclipped δ.
inline Tensor step_rgd(const Tensor& delta_prev_hidden, const Tensor& grad_at_clipped, double alpha) {
  require_same_shape(delta_prev_hidden, grad_at_clipped, "step_rgd");
  return zip_elementwise(delta_prev_hidden, grad_at_clipped, [alpha](double d, double g) { return d + alpha * g; });
}

// ---------------------------------------------------------------------------
// Driver

namespace detail {

/// ε-ball projection, intersected with the domain box when one is configured.
inline Tensor project_feasible(const Tensor& delta, std::span<const double> x, const AttackConfig& cfg) {
  if (cfg.eps == 0.0) return Tensor(delta.shape());
  Tensor out = project_eps(delta, cfg.eps);
  if (cfg.domain_clamp) {
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double lo = cfg.domain_clamp->lo - x[j];
      const double hi = cfg.domain_clamp->hi - x[j];
      out[j] = std::max(std::min(out[j], hi), lo);
    }
  }
  return out;
}

inline std::vector<double> add(std::span<const double> x, const Tensor& d) {
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] + d[j];
  return out;
}

inline bool is_success(const MlpModel& model, std::span<const double> adv, const Target& target, LossKind kind,
                       double clean_loss, double adv_loss) {
  if (kind == LossKind::CrossEntropy) return predict(model, adv) != target.class_index();
  return adv_loss > clean_loss;
}

inline bool is_success(const TheoryModel&, std::span<const double>, const Target&, LossKind, double clean_loss,
                       double adv_loss) {
  return adv_loss > clean_loss;
}

}  // namespace detail

/// Rule applied at step t (1-based) under the configured schedule.
inline UpdateRule rule_at_step(const AttackConfig& cfg, std::size_t t) {
  if (!cfg.hybrid_switch) return cfg.rule;
  return t <= *cfg.hybrid_switch ? UpdateRule::Rgd : UpdateRule::SignPgd;
}

/// Runs cfg.steps updates from the configured initialization and records a
/// StepTrace for t = 0..T. Throws NumericalError on a non-finite loss or
/// gradient.
template <typename Model>
AttackResult run_attack(const Model& model, std::span<const double> x, const Target& target, LossKind kind,
                        const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.domain_clamp) {
    for (double v : x) {
      if (v < cfg.domain_clamp->lo || v > cfg.domain_clamp->hi) {
        throw DomainError("run_attack: input lies outside the domain box");
      }
    }
  }
  const Shape shape{x.size()};
  const double tol = default_boundary_tol(cfg.eps);

  auto evaluate = [&](const Tensor& delta_c, std::size_t t) {
    const auto xa = detail::add(x, delta_c);
    auto lg = loss_and_grad_input(model, xa, target, kind);
    if (!std::isfinite(lg.loss)) throw NumericalError("run_attack: non-finite loss", t);
    if (!lg.grad.all_finite()) throw NumericalError("run_attack: non-finite gradient", t);
    return lg;
  };

  AttackResult result;
  result.trace.reserve(cfg.steps + 1);
  Tensor hidden = init_delta(cfg, shape);
  Tensor clipped = detail::project_feasible(hidden, x, cfg);
  auto lg = evaluate(clipped, 0);
  const double initial_loss = lg.loss;
  result.trace.push_back({0, hidden, clipped, lg.loss, linf_norm(lg.grad), boundary_ratio(clipped, cfg.eps, tol)});

  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const UpdateRule rule = rule_at_step(cfg, t);
    const double alpha = (cfg.hybrid_switch && rule == UpdateRule::SignPgd) ? cfg.tail_alpha.value_or(cfg.alpha)
                                                                           : cfg.alpha;
    switch (rule) {
      case UpdateRule::SignPgd: hidden = step_sign_pgd(clipped, lg.grad, alpha); break;
      case UpdateRule::RawPgd: hidden = step_raw_pgd(clipped, lg.grad, alpha); break;
      case UpdateRule::Rgd: hidden = step_rgd(hidden, lg.grad, alpha); break;
    }
    clipped = detail::project_feasible(hidden, x, cfg);
    lg = evaluate(clipped, t);
    result.trace.push_back({t, hidden, clipped, lg.loss, linf_norm(lg.grad), boundary_ratio(clipped, cfg.eps, tol)});
  }

  result.delta_clipped = clipped;
  result.adversarial = Tensor::vector(detail::add(x, clipped));
  // Clean loss is the loss at δ = 0, which differs from the t = 0 row under
  // uniform initialization.
  const double clean_loss = cfg.init == InitKind::Zero ? initial_loss : loss(model, x, target, kind);
  result.success = detail::is_success(model, result.adversarial.data(), target, kind, clean_loss,
                                      result.trace.back().loss);
  return result;
}

template <typename Model>
AttackResult run_attack(const Model& model, const Tensor& x, const Target& target, LossKind kind,
                        const AttackConfig& cfg) {
  return run_attack(model, x.data(), target, kind, cfg);
}

/// Attacks every sample; sample i is seeded with cfg.seed XOR i. Results are
/// in dataset order regardless of worker count.
template <typename Model>
std::vector<AttackResult> attack_dataset(const Model& model, const Dataset& ds, LossKind kind,
                                         const AttackConfig& cfg) {
  std::vector<AttackResult> out(ds.size());
  parallel_for(ds.size(), [&](std::size_t i) {
    AttackConfig c = cfg;
    c.seed = cfg.seed ^ static_cast<std::uint64_t>(i);
    out[i] = run_attack(model, ds.input(i), ds.target(i), kind, c);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Step-size selection

struct AlphaRow {
  double alpha = 0.0;
  double robust_accuracy = 0.0;
};

struct GridSearchResult {
  double best_alpha = 0.0;
  std::vector<AlphaRow> table;  // one row per grid entry, grid order
};

/// Index of the minimal robust accuracy; ties go to the smaller alpha.
inline std::size_t best_alpha_index(std::span<const AlphaRow> rows) {
  if (rows.empty()) throw ConfigError("best_alpha_index: empty table");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& b = rows[best];
    if (r.robust_accuracy < b.robust_accuracy ||
        (r.robust_accuracy == b.robust_accuracy && r.alpha < b.alpha)) {
      best = i;
    }
  }
  return best;
}

/// Attacks `ds` once per grid entry and keeps the alpha with the lowest
/// robust accuracy.
inline GridSearchResult grid_search_alpha(const MlpModel& model, const Dataset& ds, const AttackConfig& cfg,
                                          std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("grid_search_alpha: empty grid");
  if (!ds.is_classification()) throw ConfigError("grid_search_alpha: needs a classification dataset");
  GridSearchResult out;
  for (double a : grid) {
    AttackConfig c = cfg;
    c.alpha = a;
    const auto results = attack_dataset(model, ds, LossKind::CrossEntropy, c);
    out.table.push_back({a, robust_accuracy(model, ds.labels, results)});
  }
  out.best_alpha = out.table[best_alpha_index(out.table)].alpha;
  return out;
}

/// Step sizes as multiples of eps for sign updates.
inline std::vector<double> sign_alpha_grid(double eps) {
  return {2.0 * eps, 1.5 * eps, eps, 0.8 * eps, 0.5 * eps, 0.25 * eps, 0.2 * eps};
}

/// Absolute step sizes for raw-gradient updates: 1, 3, 10, ... 3e4, preceded
/// by smaller decades since desk-scale input gradients are far larger than
/// image-model ones.
inline std::vector<double> raw_alpha_grid() {
  return {0.01, 0.03, 0.1, 0.3, 1, 3, 10, 30, 100, 300, 1000, 3000, 1e4, 3e4};
}

// ---------------------------------------------------------------------------
// Trace export

inline void write_trace_csv_header(std::ostream& os) {
  os << "sample,step,loss,grad_inf_norm,boundary_ratio,linf_hidden,linf_clipped\n";
}

inline void write_trace_csv_rows(std::ostream& os, std::size_t sample, std::span<const StepTrace> trace) {
  for (const auto& s : trace) {
    os << sample << ',' << s.step << ',' << fmt_num(s.loss, 17) << ',' << fmt_num(s.grad_inf_norm, 17) << ','
       << fmt_num(s.boundary_ratio, 17) << ',' << fmt_num(linf_norm(s.delta_hidden), 17) << ','
       << fmt_num(linf_norm(s.delta_clipped), 17) << '\n';
  }
}

}  // namespace rgd

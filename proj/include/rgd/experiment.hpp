#pragma once

// Multi-seed attack studies shared by the command-line tool: rule naming,
// step-size resolution, per-step statistics and the CSV tables built on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rgd/attack.hpp"
#include "rgd/csv.hpp"
#include "rgd/data.hpp"
#include "rgd/metrics.hpp"
#include "rgd/model.hpp"

namespace rgd {

/// "sign", "raw", "rgd", or "hybrid" (RGD warm start, sign tail).
struct RuleChoice {
  std::string name;
  UpdateRule rule = UpdateRule::SignPgd;
  bool hybrid = false;
};

inline RuleChoice parse_rule(const std::string& name) {
  if (name == "sign") return {name, UpdateRule::SignPgd, false};
  if (name == "raw") return {name, UpdateRule::RawPgd, false};
  if (name == "rgd") return {name, UpdateRule::Rgd, false};
  if (name == "hybrid") return {name, UpdateRule::Rgd, true};
  throw ConfigError("unknown rule '" + name + "' (expected sign, raw, rgd or hybrid)");
}

inline InitKind parse_init(const std::string& name) {
  if (name == "zero") return InitKind::Zero;
  if (name == "uniform" || name == "random") return InitKind::Uniform;
  throw ConfigError("unknown init '" + name + "' (expected zero or uniform)");
}

/// Random start for sign updates, zero start for the raw-gradient rules.
inline InitKind default_init(const RuleChoice& r) {
  return r.rule == UpdateRule::SignPgd && !r.hybrid ? InitKind::Uniform : InitKind::Zero;
}

struct StudyConfig {
  double eps = 8.0 / 255.0;
  std::size_t steps = 7;
  std::vector<std::string> rules{"sign", "raw", "rgd"};
  std::map<std::string, double> alpha;           // explicit step sizes; others are grid-searched
  std::map<std::string, InitKind> init;          // overrides of default_init
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::optional<DomainBox> domain_clamp;
  std::size_t hybrid_switch = 2;
  std::vector<double> sign_grid_multiples{2.0, 1.5, 1.0, 0.8, 0.5, 0.25, 0.2};
  std::vector<double> raw_grid = raw_alpha_grid();
};

struct StepStats {
  double robust_accuracy = 0.0;
  double boundary_ratio = 0.0;
  double mean_change = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<StepStats> steps;  // entry t-1 for step t
  std::vector<AttackResult> results;
};

struct RuleRun {
  std::string rule;
  AttackConfig config;  // alpha resolved, seed of the first run
  std::vector<SeedRun> runs;
};

inline std::vector<double> sign_grid(const StudyConfig& sc) {
  std::vector<double> g;
  for (double m : sc.sign_grid_multiples) g.push_back(m * sc.eps);
  return g;
}

/// Attack configuration for `rule_name` with its step size still unset.
inline AttackConfig base_config(const StudyConfig& sc, const RuleChoice& r) {
  AttackConfig c;
  c.eps = sc.eps;
  c.alpha = 1.0;
  c.steps = sc.steps;
  c.rule = r.rule;
  const auto it = sc.init.find(r.name);
  c.init = it != sc.init.end() ? it->second : default_init(r);
  c.domain_clamp = sc.domain_clamp;
  if (r.hybrid) c.hybrid_switch = std::min(sc.hybrid_switch, sc.steps);
  return c;
}

/// Explicit alpha when given, otherwise the grid value with the lowest robust
/// accuracy on `ds`. With eps = 0 every step size is equivalent and 1 is used.
inline AttackConfig resolve_config(const MlpModel& model, const Dataset& ds, const StudyConfig& sc,
                                   const std::string& rule_name, std::uint64_t tuning_seed) {
  const RuleChoice r = parse_rule(rule_name);
  AttackConfig c = base_config(sc, r);
  c.seed = tuning_seed;
  auto pick = [&](AttackConfig cfg, const std::string& key, const std::vector<double>& grid) {
    if (const auto it = sc.alpha.find(key); it != sc.alpha.end()) return it->second;
    if (sc.eps == 0.0) return 1.0;
    return grid_search_alpha(model, ds, cfg, grid).best_alpha;
  };
  if (r.hybrid) {
    AttackConfig tail = base_config(sc, parse_rule("sign"));
    tail.seed = tuning_seed;
    c.tail_alpha = pick(tail, "sign", sign_grid(sc));
    c.alpha = pick(c, "hybrid", sc.raw_grid);
  } else {
    c.alpha = pick(c, r.name, r.rule == UpdateRule::SignPgd ? sign_grid(sc) : sc.raw_grid);
  }
  return c;
}

inline std::vector<StepStats> step_stats(const MlpModel& model, const Dataset& ds,
                                         const std::vector<AttackResult>& results, std::size_t steps) {
  const auto change = mean_step_change(std::span<const AttackResult>(results));
  std::vector<StepStats> out;
  for (std::size_t t = 1; t <= steps; ++t) {
    out.push_back({robust_accuracy_at_step(model, ds.inputs, ds.labels, results, t),
                   mean_boundary_ratio_at_step(results, t), change[t - 1]});
  }
  return out;
}

/// Every rule over every seed. Step sizes are tuned once per rule with the
/// first seed; seed s then drives the random start of run s.
inline std::vector<RuleRun> run_study(const MlpModel& model, const Dataset& ds, const StudyConfig& sc) {
  if (!ds.is_classification() || ds.empty()) throw ConfigError("attack study needs a classification dataset");
  if (ds.dim != model.input_dim()) {
    throw ConfigError("dataset dim " + std::to_string(ds.dim) + " does not match model input " +
                      std::to_string(model.input_dim()));
  }
  if (sc.seeds.empty()) throw ConfigError("attack study needs at least one seed");
  std::vector<RuleRun> out;
  for (std::size_t k = 0; k < sc.rules.size(); ++k) {
    RuleRun rr;
    rr.rule = sc.rules[k];
    rr.config = resolve_config(model, ds, sc, rr.rule, derive_seed(sc.seeds.front(), k));
    for (std::uint64_t s : sc.seeds) {
      AttackConfig c = rr.config;
      c.seed = derive_seed(s, k);
      SeedRun run{s, {}, attack_dataset(model, ds, LossKind::CrossEntropy, c)};
      run.steps = step_stats(model, ds, run.results, sc.steps);
      rr.runs.push_back(std::move(run));
    }
    out.push_back(std::move(rr));
  }
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return {v.front(), 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

template <typename Field>
MeanStd across_seeds(const RuleRun& rr, std::size_t t, Field field) {
  std::vector<double> v;
  for (const auto& run : rr.runs) v.push_back(run.steps.at(t - 1).*field);
  return mean_std(v);
}

inline void write_attack_steps_csv(std::ostream& os, const std::vector<RuleRun>& study) {
  os << "rule,seed,step,robust_accuracy,boundary_ratio,mean_change\n";
  for (const auto& rr : study) {
    for (const auto& run : rr.runs) {
      for (std::size_t t = 1; t <= run.steps.size(); ++t) {
        const auto& s = run.steps[t - 1];
        os << rr.rule << ',' << run.seed << ',' << t << ',' << fmt_num(s.robust_accuracy) << ','
           << fmt_num(s.boundary_ratio) << ',' << fmt_num(s.mean_change) << '\n';
      }
    }
  }
}

inline void write_attack_summary_csv(std::ostream& os, const std::vector<RuleRun>& study, double clean_accuracy) {
  os << "rule,step,alpha,clean_accuracy,robust_accuracy_mean,robust_accuracy_std,boundary_ratio_mean,"
        "boundary_ratio_std,mean_change_mean,mean_change_std\n";
  for (const auto& rr : study) {
    for (std::size_t t = 1; t <= rr.config.steps; ++t) {
      const auto acc = across_seeds(rr, t, &StepStats::robust_accuracy);
      const auto br = across_seeds(rr, t, &StepStats::boundary_ratio);
      const auto mc = across_seeds(rr, t, &StepStats::mean_change);
      os << rr.rule << ',' << t << ',' << fmt_num(rr.config.alpha) << ',' << fmt_num(clean_accuracy) << ','
         << fmt_num(acc.mean) << ',' << fmt_num(acc.std) << ',' << fmt_num(br.mean) << ',' << fmt_num(br.std) << ','
         << fmt_num(mc.mean) << ',' << fmt_num(mc.std) << '\n';
    }
  }
}

/// Seed-averaged metrics per algorithm and step.
inline void write_report_csv(std::ostream& os, const std::vector<RuleRun>& study) {
  os << "algorithm,step,robust_accuracy,boundary_ratio,mean_change\n";
  for (const auto& rr : study) {
    for (std::size_t t = 1; t <= rr.config.steps; ++t) {
      os << rr.rule << ',' << t << ',' << fmt_num(across_seeds(rr, t, &StepStats::robust_accuracy).mean) << ','
         << fmt_num(across_seeds(rr, t, &StepStats::boundary_ratio).mean) << ','
         << fmt_num(across_seeds(rr, t, &StepStats::mean_change).mean) << '\n';
    }
  }
}

/// Coordinates of every sample's clipped perturbation at each listed step,
/// pooled over the whole dataset for the first seed.
inline void write_histogram_csv(std::ostream& os, const RuleRun& rr, const std::vector<std::size_t>& steps,
                                std::size_t bins) {
  const HistogramSpec spec{bins, rr.config.eps};
  os << "step,bin_lo,bin_hi,count\n";
  for (std::size_t t : steps) {
    if (t > rr.config.steps) throw ConfigError("histogram step " + std::to_string(t) + " beyond the attack length");
    std::vector<std::size_t> counts(bins, 0);
    for (const auto& res : rr.runs.front().results) accumulate_histogram(res.trace[t].delta_clipped.data(), spec, counts);
    for (std::size_t b = 0; b < bins; ++b) {
      os << t << ',' << fmt_num(spec.bin_lo(b)) << ',' << fmt_num(spec.bin_hi(b)) << ',' << counts[b] << '\n';
    }
  }
}

}  // namespace rgd

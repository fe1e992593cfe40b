// rgd: command-line front end for the attack, theory and training library.
//
// Every subcommand accepts --config FILE with `key = value` lines (# starts a
// comment). Flags on the command line override file values, which override
// built-in defaults.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
// 3 theorem violation.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rgd/experiment.hpp"
#include "rgd/io.hpp"
#include "rgd/theory.hpp"
#include "rgd/train.hpp"

namespace fs = std::filesystem;
using namespace rgd;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitViolation = 3;

// ---------------------------------------------------------------------------
// Value parsing

double parse_real(const std::string& text, const std::string& what) {
  auto one = [&](std::string_view s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError(what + ": cannot parse '" + text + "' as a number");
    return v;
  };
  const auto slash = text.find('/');
  if (slash == std::string::npos) return one(text);
  const double den = one(std::string_view(text).substr(slash + 1));
  if (den == 0.0) throw ConfigError(what + ": zero denominator in '" + text + "'");
  return one(std::string_view(text).substr(0, slash)) / den;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_real_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(parse_real(item, what));
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  for (double v : parse_real_list(s, what)) {
    if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError(what + ": expected positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<std::uint64_t> seed_list(std::uint64_t base, std::size_t count) {
  if (count == 0) throw ConfigError("--seeds must be at least 1");
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(base + i);
  return out;
}

// ---------------------------------------------------------------------------
// Config files

/// Turns `key = value` lines into `--key value` arguments.
std::vector<std::string> config_args(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::vector<std::string> args;
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key == "config") {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad key '" + key + "'");
    }
    args.push_back("--" + key);
    args.push_back(value);
  }
  return args;
}

/// argv with any --config FILE expanded right after the subcommand, so explicit
/// flags (parsed later) take precedence. Keys the subcommand does not know are
/// rejected here with the file name in the message.
std::vector<std::string> expand_config(const CLI::App& app, int argc, char** argv) {
  std::vector<std::string> in(argv + 1, argv + argc), file_args, rest;
  std::string config_path;
  auto load = [&](const std::string& path) {
    const auto a = config_args(path);
    file_args.insert(file_args.end(), a.begin(), a.end());
    config_path = path;
  };
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == "--config") {
      if (i + 1 >= in.size()) throw ConfigError("--config needs a file argument");
      load(in[++i]);
    } else if (in[i].rfind("--config=", 0) == 0) {
      load(in[i].substr(9));
    } else {
      rest.push_back(in[i]);
    }
  }
  std::vector<std::string> out;
  std::size_t k = 0;
  if (!rest.empty() && rest[0].rfind("-", 0) != 0) out.push_back(rest[k++]);
  if (!file_args.empty()) {
    const CLI::App* sub = out.empty() ? nullptr : app.get_subcommand_no_throw(out[0]);
    if (sub == nullptr) throw ConfigError("--config needs a subcommand");
    for (std::size_t i = 0; i < file_args.size(); i += 2) {
      if (sub->get_option_no_throw(file_args[i]) == nullptr) {
        throw ConfigError(config_path + ": unknown key '" + file_args[i].substr(2) + "' for " + sub->get_name());
      }
    }
  }
  out.insert(out.end(), file_args.begin(), file_args.end());
  out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(k), rest.end());
  return out;
}

/// Hash of every resolved option except output locations, so the same
/// experiment written to two directories carries the same provenance.
std::uint64_t config_hash(const CLI::App& sub) {
  static const std::vector<std::string> excluded{"out", "curves", "trace", "reproducers", "test-out"};
  std::map<std::string, std::string> kv;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" ||
        std::find(excluded.begin(), excluded.end(), name) != excluded.end()) {
      continue;
    }
    std::string value;
    if (opt->count() > 0) {
      value = opt->results().back();
    } else {
      value = opt->get_default_str();
    }
    kv[name] = value;
  }
  std::string canon = std::string(sub.get_name()) + '\n';
  for (const auto& [k, v] : kv) canon += k + '=' + v + '\n';
  return fnv1a(canon);
}

// ---------------------------------------------------------------------------
// File helpers

void require_parent_dir(const fs::path& file) {
  const fs::path parent = file.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw ConfigError("output directory '" + parent.string() + "' does not exist");
  }
}

void require_file(const fs::path& file, const char* what) {
  if (!fs::is_regular_file(file)) throw ConfigError(std::string(what) + " '" + file.string() + "' not found");
}

fs::path prepare_out_dir(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  fs::create_directories(dir);
  return dir;
}

template <typename Body>
void write_text(const fs::path& path, Body body) {
  std::ostringstream os;
  body(os);
  const std::string s = os.str();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

MlpModel load_mlp(const fs::path& path) {
  require_file(path, "model");
  auto any = decode_model(read_file(path));
  if (!std::holds_alternative<MlpModel>(any)) {
    throw ConfigError("model '" + path.string() + "' is a regression model; a classifier is required");
  }
  return std::get<MlpModel>(std::move(any));
}

Dataset load_dataset(const fs::path& path) {
  require_file(path, "dataset");
  return decode_dataset(read_file(path));
}

void check_compatible(const MlpModel& m, const Dataset& ds, const fs::path& model_path) {
  if (!ds.is_classification()) throw ConfigError("dataset '" + ds.name + "' has no class labels");
  if (m.input_dim() != ds.dim) {
    throw ConfigError("model '" + model_path.string() + "' expects " + std::to_string(m.input_dim()) +
                      " inputs but dataset has dim " + std::to_string(ds.dim));
  }
  const auto max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
  if (static_cast<std::size_t>(max_label) >= m.output_dim()) {
    throw ConfigError("model '" + model_path.string() + "' has " + std::to_string(m.output_dim()) +
                      " outputs but dataset uses label " + std::to_string(max_label));
  }
}

// ---------------------------------------------------------------------------
// Shared attack options

struct AttackOptions {
  std::string model, data, out;
  std::string rules = "sign,raw,rgd";
  std::string eps = "8/255";
  std::size_t steps = 7;
  std::string alpha_sign, alpha_raw, alpha_rgd, alpha_hybrid;
  std::string init_sign, init_raw, init_rgd, init_hybrid;
  std::size_t hybrid_switch = 2;
  std::size_t seeds = 5;
  std::uint64_t seed = 1;
  bool clamp = false;
  std::string sign_grid = "2,1.5,1,0.8,0.5,0.25,0.2";
  std::string raw_grid = "0.01,0.03,0.1,0.3,1,3,10,30,100,300,1000,3000,10000,30000";

  void add_to(CLI::App* app, std::size_t default_steps) {
    steps = default_steps;
    app->add_option("--model", model, "Classifier checkpoint (RGDM)")->required();
    app->add_option("--data", data, "Dataset file (RGDD)")->required();
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--rules", rules, "Comma list of sign, raw, rgd, hybrid");
    app->add_option("--eps", eps, "L-inf radius, real or fraction such as 8/255");
    app->add_option("--steps", steps, "Attack iterations");
    app->add_option("--alpha-sign", alpha_sign, "Step size for sign updates (grid-searched when absent)");
    app->add_option("--alpha-raw", alpha_raw, "Step size for raw-gradient updates");
    app->add_option("--alpha-rgd", alpha_rgd, "Step size for RGD updates");
    app->add_option("--alpha-hybrid", alpha_hybrid, "Step size of the RGD phase of hybrid runs");
    app->add_option("--init-sign", init_sign, "zero or uniform (default uniform)");
    app->add_option("--init-raw", init_raw, "zero or uniform (default zero)");
    app->add_option("--init-rgd", init_rgd, "zero or uniform (default zero)");
    app->add_option("--init-hybrid", init_hybrid, "zero or uniform (default zero)");
    app->add_option("--hybrid-switch", hybrid_switch, "RGD steps before the sign tail in hybrid runs");
    app->add_option("--seeds", seeds, "Number of independent runs");
    app->add_option("--seed", seed, "First seed; runs use seed, seed+1, ...");
    app->add_flag("--clamp", clamp, "Keep x + delta inside [0, 1]");
    app->add_option("--sign-grid", sign_grid, "Sign step-size grid as multiples of eps");
    app->add_option("--raw-grid", raw_grid, "Raw/RGD step-size grid (absolute)");
  }

  StudyConfig study() const {
    StudyConfig sc;
    sc.eps = parse_real(eps, "--eps");
    if (!(sc.eps >= 0.0)) throw ConfigError("--eps must be >= 0");
    sc.steps = steps;
    sc.rules = split_list(rules);
    if (sc.rules.empty()) throw ConfigError("--rules is empty");
    for (const auto& r : sc.rules) parse_rule(r);
    const std::pair<const char*, const std::string*> alphas[] = {
        {"sign", &alpha_sign}, {"raw", &alpha_raw}, {"rgd", &alpha_rgd}, {"hybrid", &alpha_hybrid}};
    for (const auto& [name, text] : alphas) {
      if (!text->empty()) sc.alpha[name] = parse_real(*text, std::string("--alpha-") + name);
    }
    const std::pair<const char*, const std::string*> inits[] = {
        {"sign", &init_sign}, {"raw", &init_raw}, {"rgd", &init_rgd}, {"hybrid", &init_hybrid}};
    for (const auto& [name, text] : inits) {
      if (!text->empty()) sc.init[name] = parse_init(*text);
    }
    sc.hybrid_switch = hybrid_switch;
    sc.seeds = seed_list(seed, seeds);
    if (clamp) sc.domain_clamp = DomainBox{};
    sc.sign_grid_multiples = parse_real_list(sign_grid, "--sign-grid");
    sc.raw_grid = parse_real_list(raw_grid, "--raw-grid");
    return sc;
  }
};

void print_rule_table(const std::vector<RuleRun>& study) {
  std::printf("%-8s %10s %16s %16s %14s\n", "rule", "alpha", "robust_acc(%)", "boundary(%)", "mean_change");
  for (const auto& rr : study) {
    const std::size_t t = rr.config.steps;
    const auto acc = across_seeds(rr, t, &StepStats::robust_accuracy);
    const auto br = across_seeds(rr, t, &StepStats::boundary_ratio);
    const auto mc = across_seeds(rr, t, &StepStats::mean_change);
    std::printf("%-8s %10.4g %9.2f +-%4.2f %9.2f +-%4.2f %14.6f\n", rr.rule.c_str(), rr.config.alpha,
                100 * acc.mean, 100 * acc.std, 100 * br.mean, 100 * br.std, mc.mean);
  }
}

// ---------------------------------------------------------------------------
// Commands

struct GenDataOptions {
  std::string out, test_out;
  std::size_t classes = 2, dim = 16, n = 2000;
  double spread = 0.6;
  double test_fraction = 0.0;
  std::uint64_t seed = 1;
  std::string idx_images, idx_labels, name;
};

int cmd_gen_data(const GenDataOptions& o) {
  require_parent_dir(o.out);
  if (!o.test_out.empty()) require_parent_dir(o.test_out);
  Dataset ds;
  if (!o.idx_images.empty() || !o.idx_labels.empty()) {
    if (o.idx_images.empty() || o.idx_labels.empty()) {
      throw ConfigError("--idx-images and --idx-labels must be given together");
    }
    require_file(o.idx_images, "IDX images");
    require_file(o.idx_labels, "IDX labels");
    auto parse = [](const std::string& path) {
      try {
        return parse_idx(read_file(path));
      } catch (const ParseError& e) {
        throw ConfigError("'" + path + "': " + e.what());
      }
    };
    ds = dataset_from_idx(parse(o.idx_images), parse(o.idx_labels), o.name.empty() ? "idx" : o.name);
  } else {
    ds = synth_blobs(o.n, o.dim, o.classes, o.spread, o.seed);
    if (!o.name.empty()) ds.name = o.name;
  }
  if (o.test_fraction > 0.0) {
    if (o.test_out.empty()) throw ConfigError("--test-fraction needs --test-out");
    auto [train, test] = split(ds, 1.0 - o.test_fraction, o.test_fraction, o.seed);
    write_file(o.out, encode_dataset(train));
    write_file(o.test_out, encode_dataset(test));
    std::printf("wrote %s (%zu samples) and %s (%zu samples)\n", o.out.c_str(), train.size(), o.test_out.c_str(),
                test.size());
  } else {
    write_file(o.out, encode_dataset(ds));
    std::printf("wrote %s (%zu samples, dim %zu, %zu classes)\n", o.out.c_str(), ds.size(), ds.dim, ds.class_count);
  }
  return 0;
}

struct TrainOptions {
  std::string data, eval_data, out, curves;
  std::string hidden = "64,64";
  std::size_t epochs = 30, batch = 32;
  double lr = 0.05, momentum = 0.0;
  std::uint64_t seed = 1;
  std::string adv_rule = "none";
  std::string adv_eps = "8/255";
  std::string adv_alpha;
  std::size_t adv_steps = 5;
  std::string adv_init;
  std::string eval_eps = "8/255", eval_alpha = "2/255";
  std::size_t eval_steps = 10;
};

int cmd_train(const CLI::App& sub, const TrainOptions& o) {
  require_parent_dir(o.out);
  if (!o.curves.empty()) require_parent_dir(o.curves);
  const Dataset train = load_dataset(o.data);
  if (!train.is_classification()) throw ConfigError("dataset '" + o.data + "' has no class labels");
  Dataset eval = o.eval_data.empty() ? train : load_dataset(o.eval_data);
  if (eval.dim != train.dim) throw ConfigError("evaluation data dim differs from training data");

  std::vector<std::size_t> dims{train.dim};
  for (std::size_t w : parse_size_list(o.hidden, "--hidden")) dims.push_back(w);
  dims.push_back(std::max<std::size_t>(train.class_count, 2));

  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.momentum = o.momentum;
  cfg.seed = o.seed;
  cfg.eval_attack = AttackConfig{};
  cfg.eval_attack.eps = parse_real(o.eval_eps, "--eval-eps");
  cfg.eval_attack.alpha = parse_real(o.eval_alpha, "--eval-alpha");
  cfg.eval_attack.steps = o.eval_steps;
  cfg.eval_attack.init = InitKind::Uniform;
  cfg.eval_attack.seed = o.seed;

  const double adv_eps = parse_real(o.adv_eps, "--adv-eps");
  const bool adversarial = o.adv_rule != "none" && adv_eps > 0.0;
  if (o.adv_rule != "none") {
    const RuleChoice r = parse_rule(o.adv_rule);
    if (r.rule == UpdateRule::RawPgd || r.hybrid) throw ConfigError("--adv-rule must be none, sign or rgd");
    AttackConfig a;
    a.eps = adv_eps;
    a.steps = o.adv_steps;
    a.rule = r.rule;
    a.init = o.adv_init.empty() ? default_init(r) : parse_init(o.adv_init);
    // Sign steps scale with eps; raw-gradient steps do not.
    a.alpha = !o.adv_alpha.empty() ? parse_real(o.adv_alpha, "--adv-alpha")
              : r.rule == UpdateRule::SignPgd ? std::max(adv_eps, 1e-12) / 2.0
                                              : 1.0;
    a.seed = o.seed;
    cfg.adversarial = a;
  }

  const auto init = MlpModel::random(dims, o.seed);
  const TrainResult res = adversarial ? train_adversarial(init, train, cfg, &eval)
                                      : train_standard(init, train, cfg, &eval);
  write_file(o.out, encode_model(res.model));
  if (!o.curves.empty()) {
    write_text(o.curves, [&](std::ostream& os) {
      write_csv_preamble(os, config_hash(sub), {o.seed});
      write_curve_csv(os, res.curve);
    });
  }
  const auto e = evaluate(res.model, eval, cfg.eval_attack);
  std::printf("%s training, %zu epochs, final loss %.6f\n", adversarial ? o.adv_rule.c_str() : "standard", o.epochs,
              res.curve.back().train_loss);
  std::printf("Clean %.2f | Robust %.2f\n", 100.0 * e.clean_accuracy, 100.0 * e.robust_accuracy);
  return 0;
}

int cmd_attack(const CLI::App& sub, const AttackOptions& o, bool trace) {
  const StudyConfig sc = o.study();
  const MlpModel model = load_mlp(o.model);
  const Dataset ds = load_dataset(o.data);
  check_compatible(model, ds, o.model);
  const fs::path dir = prepare_out_dir(o.out);
  const auto study = run_study(model, ds, sc);
  const double clean = clean_accuracy(model, ds);
  const auto hash = config_hash(sub);
  write_text(dir / "attack_steps.csv", [&](std::ostream& os) {
    write_csv_preamble(os, hash, sc.seeds);
    write_attack_steps_csv(os, study);
  });
  write_text(dir / "attack_summary.csv", [&](std::ostream& os) {
    write_csv_preamble(os, hash, sc.seeds);
    write_attack_summary_csv(os, study, clean);
  });
  if (trace) {
    for (const auto& rr : study) {
      write_text(dir / ("trace_" + rr.rule + ".csv"), [&](std::ostream& os) {
        write_csv_preamble(os, hash, {rr.runs.front().seed});
        write_trace_csv_header(os);
        const auto& results = rr.runs.front().results;
        for (std::size_t i = 0; i < results.size(); ++i) write_trace_csv_rows(os, i, results[i].trace);
      });
    }
  }
  std::printf("clean accuracy %.2f%%, eps %.6g, %zu steps, %zu seeds\n", 100 * clean, sc.eps, sc.steps,
              sc.seeds.size());
  print_rule_table(study);
  return 0;
}

int cmd_report(const CLI::App& sub, const AttackOptions& o, std::size_t bins, const std::string& hist_steps) {
  const StudyConfig sc = o.study();
  if (!(sc.eps > 0.0)) throw ConfigError("report needs eps > 0 for histogram ranges");
  const auto hsteps = parse_size_list(hist_steps, "--hist-steps");
  for (std::size_t t : hsteps) {
    if (t > sc.steps) throw ConfigError("--hist-steps entry " + std::to_string(t) + " exceeds --steps");
  }
  if (bins < 2) throw ConfigError("--bins must be at least 2");
  const MlpModel model = load_mlp(o.model);
  const Dataset ds = load_dataset(o.data);
  check_compatible(model, ds, o.model);
  const fs::path dir = prepare_out_dir(o.out);
  const auto study = run_study(model, ds, sc);
  const auto hash = config_hash(sub);
  write_text(dir / "report.csv", [&](std::ostream& os) {
    write_csv_preamble(os, hash, sc.seeds);
    write_report_csv(os, study);
  });
  for (const auto& rr : study) {
    write_text(dir / ("histogram_" + rr.rule + ".csv"), [&](std::ostream& os) {
      write_csv_preamble(os, hash, {rr.runs.front().seed});
      write_histogram_csv(os, rr, hsteps, bins);
    });
  }
  print_rule_table(study);
  return 0;
}

struct SweepOptions {
  AttackOptions attack;
  std::string inits = "uniform,zero";
};

int cmd_sweep(const CLI::App& sub, const SweepOptions& so) {
  const AttackOptions& o = so.attack;
  StudyConfig sc = o.study();
  if (!(sc.eps > 0.0)) throw ConfigError("sweep needs eps > 0");
  std::vector<InitKind> inits;
  for (const auto& name : split_list(so.inits)) inits.push_back(parse_init(name));
  if (inits.empty()) throw ConfigError("--inits is empty");
  const MlpModel model = load_mlp(o.model);
  const Dataset ds = load_dataset(o.data);
  check_compatible(model, ds, o.model);
  const fs::path dir = prepare_out_dir(o.out);

  struct Cell {
    std::string rule;
    InitKind init;
    std::vector<AlphaRow> rows;
    std::size_t best;
  };
  std::vector<Cell> cells;
  for (std::size_t k = 0; k < sc.rules.size(); ++k) {
    const RuleChoice r = parse_rule(sc.rules[k]);
    for (InitKind init : inits) {
      AttackConfig c = base_config(sc, r);
      c.init = init;
      c.seed = derive_seed(sc.seeds.front(), k);
      std::vector<double> grid;
      if (const auto it = sc.alpha.find(r.name); it != sc.alpha.end()) {
        grid = {it->second};
      } else if (r.rule == UpdateRule::SignPgd && !r.hybrid) {
        grid = sign_grid(sc);
      } else {
        grid = sc.raw_grid;
      }
      if (r.hybrid) c.tail_alpha = sc.alpha.count("sign") ? sc.alpha.at("sign") : sc.eps / 4;
      // Average over seeds for each grid point.
      std::vector<AlphaRow> rows;
      for (double a : grid) {
        double acc = 0.0;
        for (std::uint64_t s : sc.seeds) {
          AttackConfig run = c;
          run.alpha = a;
          run.seed = derive_seed(s, k);
          acc += robust_accuracy(model, ds.labels, attack_dataset(model, ds, LossKind::CrossEntropy, run));
        }
        rows.push_back({a, acc / static_cast<double>(sc.seeds.size())});
      }
      cells.push_back({r.name, init, rows, best_alpha_index(rows)});
    }
  }
  const auto hash = config_hash(sub);
  write_text(dir / "sweep.csv", [&](std::ostream& os) {
    write_csv_preamble(os, hash, sc.seeds);
    os << "rule,init,alpha,robust_accuracy,best\n";
    for (const auto& c : cells) {
      for (std::size_t i = 0; i < c.rows.size(); ++i) {
        os << c.rule << ',' << to_string(c.init) << ',' << fmt_num(c.rows[i].alpha) << ','
           << fmt_num(c.rows[i].robust_accuracy) << ',' << (i == c.best ? 1 : 0) << '\n';
      }
    }
  });
  // One row per rule, one column pair per initialization.
  write_text(dir / "sweep_table.csv", [&](std::ostream& os) {
    write_csv_preamble(os, hash, sc.seeds);
    os << "rule";
    for (InitKind init : inits) os << ',' << to_string(init) << "_init," << to_string(init) << "_alpha";
    os << '\n';
    for (std::size_t k = 0; k < sc.rules.size(); ++k) {
      os << sc.rules[k];
      for (std::size_t j = 0; j < inits.size(); ++j) {
        const auto& c = cells[k * inits.size() + j];
        os << ',' << fmt_num(c.rows[c.best].robust_accuracy) << ',' << fmt_num(c.rows[c.best].alpha);
      }
      os << '\n';
    }
  });
  std::printf("%-8s", "rule");
  for (InitKind init : inits) std::printf(" %14s", (std::string(to_string(init)) + " init").c_str());
  std::printf("\n");
  for (std::size_t k = 0; k < sc.rules.size(); ++k) {
    std::printf("%-8s", sc.rules[k].c_str());
    for (std::size_t j = 0; j < inits.size(); ++j) {
      const auto& c = cells[k * inits.size() + j];
      std::printf(" %14.2f", 100 * c.rows[c.best].robust_accuracy);
    }
    std::printf("\n");
  }
  return 0;
}

struct TheoremOptions {
  std::uint64_t n = 100000;
  std::uint64_t seed = 7;
  std::string reproducers = "violations";
  std::string out;
};

int cmd_theorem(const CLI::App& sub, const TheoremOptions& o) {
  if (o.n == 0) throw ConfigError("--n must be at least 1");
  if (!o.out.empty()) require_parent_dir(o.out);
  const auto rep = run_theory_campaign(o.n, o.seed, fs::path(o.reproducers));
  for (const auto& c : rep.checks) {
    std::printf("%-9s violations %llu, worst relative slack %.6e at instance %llu\n", c.name.c_str(),
                static_cast<unsigned long long>(c.violations), c.worst_relative_slack,
                static_cast<unsigned long long>(c.worst_instance));
  }
  std::printf("instances: %llu\nviolations: %llu\n", static_cast<unsigned long long>(rep.instances),
              static_cast<unsigned long long>(rep.total_violations()));
  if (!o.out.empty()) {
    write_text(o.out, [&](std::ostream& os) {
      write_csv_preamble(os, config_hash(sub), {o.seed});
      os << "check,instances,violations,worst_relative_slack,worst_instance\n";
      for (const auto& c : rep.checks) {
        os << c.name << ',' << rep.instances << ',' << c.violations << ',' << fmt_num(c.worst_relative_slack, 17)
           << ',' << c.worst_instance << '\n';
      }
    });
  }
  if (rep.total_violations() > 0) {
    std::fprintf(stderr, "reproducers written to %s\n", o.reproducers.c_str());
    return kExitViolation;
  }
  return 0;
}

struct TransferOptions {
  AttackOptions attack;  // --model is the source
  std::string targets;
};

int cmd_transfer(const CLI::App& sub, const TransferOptions& to) {
  const AttackOptions& o = to.attack;
  const StudyConfig sc = o.study();
  const MlpModel source = load_mlp(o.model);
  const Dataset ds = load_dataset(o.data);
  check_compatible(source, ds, o.model);
  const auto target_paths = split_list(to.targets);
  if (target_paths.empty()) throw ConfigError("--targets needs at least one checkpoint");
  std::vector<std::pair<std::string, MlpModel>> targets;
  for (const auto& p : target_paths) {
    MlpModel m = load_mlp(p);
    if (m.input_dim() != source.input_dim()) {
      throw ConfigError("target '" + p + "' expects " + std::to_string(m.input_dim()) + " inputs but source '" +
                        o.model + "' expects " + std::to_string(source.input_dim()));
    }
    check_compatible(m, ds, p);
    const bool self = fs::equivalent(p, o.model);
    targets.emplace_back(self ? "Source" : fs::path(p).stem().string(), std::move(m));
  }
  const fs::path dir = prepare_out_dir(o.out);
  const auto study = run_study(source, ds, sc);

  // Success: the target misclassifies the adversarial input.
  const auto hash = config_hash(sub);
  write_text(dir / "transfer.csv", [&](std::ostream& os) {
    write_csv_preamble(os, hash, sc.seeds);
    os << "target,rule,alpha,success_rate_mean,success_rate_std,target_clean_accuracy\n";
    for (const auto& [name, target] : targets) {
      const double clean = clean_accuracy(target, ds);
      for (const auto& rr : study) {
        std::vector<double> rates;
        for (const auto& run : rr.runs) rates.push_back(1.0 - robust_accuracy(target, ds.labels, run.results));
        const auto ms = mean_std(rates);
        os << name << ',' << rr.rule << ',' << fmt_num(rr.config.alpha) << ',' << fmt_num(ms.mean) << ','
           << fmt_num(ms.std) << ',' << fmt_num(clean) << '\n';
        std::printf("%-16s %-8s success %6.2f +- %4.2f %%\n", name.c_str(), rr.rule.c_str(), 100 * ms.mean,
                    100 * ms.std);
      }
    }
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Adversarial attack toolkit: signed, raw-gradient and RGD updates.\n"
               "Options may also come from --config FILE (key = value per line); precedence is\n"
               "flag > file > default.");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

  GenDataOptions gen;
  auto* s_gen = app.add_subcommand("gen-data", "Generate or import a dataset (RGDD)");
  s_gen->add_option("--out", gen.out, "Output dataset file")->required();
  s_gen->add_option("--classes", gen.classes, "Number of clusters");
  s_gen->add_option("--dim", gen.dim, "Input dimension");
  s_gen->add_option("--n", gen.n, "Sample count");
  s_gen->add_option("--spread", gen.spread, "Cluster standard deviation before rescaling");
  s_gen->add_option("--seed", gen.seed, "Generator and split seed");
  s_gen->add_option("--name", gen.name, "Dataset name stored in the file");
  s_gen->add_option("--idx-images", gen.idx_images, "Import images from an IDX file instead");
  s_gen->add_option("--idx-labels", gen.idx_labels, "Labels IDX file paired with --idx-images");
  s_gen->add_option("--test-fraction", gen.test_fraction, "Hold out this fraction into --test-out");
  s_gen->add_option("--test-out", gen.test_out, "Held-out dataset file");

  TrainOptions tr;
  auto* s_train = app.add_subcommand("train", "Standard or adversarial training of an MLP");
  s_train->add_option("--data", tr.data, "Training dataset")->required();
  s_train->add_option("--eval-data", tr.eval_data, "Evaluation dataset (defaults to training data)");
  s_train->add_option("--out", tr.out, "Output checkpoint")->required();
  s_train->add_option("--curves", tr.curves, "Per-epoch curve CSV");
  s_train->add_option("--hidden", tr.hidden, "Hidden widths, comma separated");
  s_train->add_option("--epochs", tr.epochs, "Training epochs");
  s_train->add_option("--batch", tr.batch, "Minibatch size");
  s_train->add_option("--lr", tr.lr, "SGD learning rate");
  s_train->add_option("--momentum", tr.momentum, "SGD momentum");
  s_train->add_option("--seed", tr.seed, "Initialization, shuffling and attack seed");
  s_train->add_option("--adv-rule", tr.adv_rule, "none, sign or rgd");
  s_train->add_option("--adv-eps", tr.adv_eps, "Inner attack radius; 0 trains on clean data");
  s_train->add_option("--adv-alpha", tr.adv_alpha, "Inner step size (sign: eps/2, rgd: 1)");
  s_train->add_option("--adv-steps", tr.adv_steps, "Inner attack iterations");
  s_train->add_option("--adv-init", tr.adv_init, "Inner init (sign: uniform, rgd: zero)");
  s_train->add_option("--eval-eps", tr.eval_eps, "Evaluation attack radius");
  s_train->add_option("--eval-alpha", tr.eval_alpha, "Evaluation attack step size");
  s_train->add_option("--eval-steps", tr.eval_steps, "Evaluation attack iterations");

  AttackOptions at;
  bool trace = false;
  auto* s_attack = app.add_subcommand("attack", "Run attacks over several seeds and summarise per step");
  at.add_to(s_attack, 7);
  s_attack->add_flag("--trace", trace, "Also write per-sample traces for the first seed");

  SweepOptions sw;
  auto* s_sweep = app.add_subcommand("sweep", "Step-size grid search per rule and initialization");
  sw.attack.add_to(s_sweep, 7);
  s_sweep->add_option("--inits", sw.inits, "Comma list of uniform, zero");

  TheoremOptions th;
  auto* s_theorem = app.add_subcommand("theorem", "Randomised check of the step-gain bound and its lemmas");
  s_theorem->add_option("--n", th.n, "Number of random instances");
  s_theorem->add_option("--seed", th.seed, "Campaign seed");
  s_theorem->add_option("--reproducers", th.reproducers, "Directory for violation dumps");
  s_theorem->add_option("--out", th.out, "Summary CSV");

  TransferOptions tf;
  auto* s_transfer = app.add_subcommand("transfer", "Attack a source model and score the examples on targets");
  tf.attack.add_to(s_transfer, 10);
  s_transfer->add_option("--targets", tf.targets, "Comma list of target checkpoints")->required();

  AttackOptions rp;
  std::size_t bins = 50;
  std::string hist_steps = "1,3,5,7";
  auto* s_report = app.add_subcommand("report", "Per-step report table and perturbation histograms");
  rp.add_to(s_report, 7);
  s_report->add_option("--bins", bins, "Histogram bins over [-eps, eps]");
  s_report->add_option("--hist-steps", hist_steps, "Steps at which histograms are taken");

  try {
    const auto args = expand_config(app, argc, argv);
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }

  try {
    if (s_gen->parsed()) return cmd_gen_data(gen);
    if (s_train->parsed()) return cmd_train(*s_train, tr);
    if (s_attack->parsed()) return cmd_attack(*s_attack, at, trace);
    if (s_sweep->parsed()) return cmd_sweep(*s_sweep, sw);
    if (s_theorem->parsed()) return cmd_theorem(*s_theorem, th);
    if (s_transfer->parsed()) return cmd_transfer(*s_transfer, tf);
    if (s_report->parsed()) return cmd_report(*s_report, rp, bins, hist_steps);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}

#pragma once

// Minibatch SGD on cross-entropy, optionally adversarial: every batch is
// replaced by attack outputs against the current weights before the descent
// step.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rgd/attack.hpp"
#include "rgd/csv.hpp"
#include "rgd/data.hpp"
#include "rgd/errors.hpp"
#include "rgd/metrics.hpp"
#include "rgd/model.hpp"
#include "rgd/parallel.hpp"
#include "rgd/rng.hpp"

namespace rgd {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.0;
  std::optional<AttackConfig> adversarial;  // inner maximisation
  AttackConfig eval_attack = default_eval_attack();
  std::uint64_t seed = 0;
  bool track_curves = true;  // evaluate clean/robust accuracy after every epoch

  static AttackConfig default_eval_attack() {
    AttackConfig a;
    a.eps = 8.0 / 255.0;
    a.alpha = 2.0 / 255.0;
    a.steps = 10;
    a.rule = UpdateRule::SignPgd;
    a.init = InitKind::Uniform;
    return a;
  }

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: bad learning rate");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
    eval_attack.validate();
    if (adversarial) {
      adversarial->validate();
      if (adversarial->eps > 0.0 && adversarial->eps != eval_attack.eps) {
        throw ConfigError("train: adversarial eps must equal the evaluation eps");
      }
    }
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double clean_accuracy = std::nan("");
  double robust_accuracy = std::nan("");
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochStats> curve;
};

struct Evaluation {
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
};

inline double clean_accuracy(const MlpModel& model, const Dataset& ds) {
  if (ds.empty()) throw DomainError("clean_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (predict(model, ds.input(i)) == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

inline Evaluation evaluate(const MlpModel& model, const Dataset& ds, const AttackConfig& eval_attack) {
  const auto results = attack_dataset(model, ds, LossKind::CrossEntropy, eval_attack);
  return {clean_accuracy(model, ds), robust_accuracy(model, ds.labels, results)};
}

namespace detail {

inline void sgd_step(MlpModel& model, const MlpGradients& g, std::vector<DenseLayer>& velocity, double lr,
                     double momentum) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto apply = [&](Tensor& param, const Tensor& grad, Tensor& vel) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        double step = grad[i];
        if (momentum > 0.0) {
          vel[i] = momentum * vel[i] + grad[i];
          step = vel[i];
        }
        param[i] -= lr * step;
      }
    };
    apply(model.layers[l].weight, g.layers[l].weight, velocity[l].weight);
    apply(model.layers[l].bias, g.layers[l].bias, velocity[l].bias);
  }
}

inline TrainResult train_loop(MlpModel model, const Dataset& ds, const TrainConfig& cfg, const Dataset* eval_set) {
  cfg.validate();
  if (!ds.is_classification() || ds.empty()) throw ConfigError("train: needs a non-empty classification dataset");
  if (ds.dim != model.input_dim()) {
    throw DimensionError("train: dataset dim " + std::to_string(ds.dim) + " vs model input " +
                         std::to_string(model.input_dim()));
  }
  const bool adversarial = cfg.adversarial && cfg.adversarial->eps > 0.0;
  std::vector<DenseLayer> velocity = zero_gradients(model).layers;
  TrainResult out;
  const std::size_t n = ds.size();
  std::size_t batch_counter = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order_rng(derive_seed(cfg.seed, epoch));
    const auto order = order_rng.permutation(n);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_counter) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const std::size_t b = end - start;
      std::vector<double> flat(b * ds.dim);
      std::vector<Target> targets;
      targets.reserve(b);
      for (std::size_t k = 0; k < b; ++k) targets.push_back(ds.target(order[start + k]));
      if (adversarial) {
        const std::uint64_t epoch_seed = derive_seed(cfg.adversarial->seed ^ cfg.seed, epoch);
        parallel_for(b, [&](std::size_t k) {
          const std::size_t idx = order[start + k];
          AttackConfig c = *cfg.adversarial;
          c.seed = epoch_seed ^ static_cast<std::uint64_t>(idx);
          const auto res = run_attack(model, ds.input(idx), targets[k], LossKind::CrossEntropy, c);
          std::copy(res.adversarial.data().begin(), res.adversarial.data().end(), flat.begin() + k * ds.dim);
        });
      } else {
        for (std::size_t k = 0; k < b; ++k) {
          const auto r = ds.input(order[start + k]);
          std::copy(r.begin(), r.end(), flat.begin() + k * ds.dim);
        }
      }
      const auto g = grad_params(model, Tensor({b, ds.dim}, std::move(flat)), targets, LossKind::CrossEntropy);
      if (!std::isfinite(g.mean_loss)) {
        throw NumericalError("train: non-finite loss in epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(start / cfg.batch_size),
                             batch_counter);
      }
      loss_sum += g.mean_loss * static_cast<double>(b);
      detail::sgd_step(model, g, velocity, cfg.learning_rate, cfg.momentum);
    }
    EpochStats st{epoch + 1, loss_sum / static_cast<double>(n)};
    if (cfg.track_curves) {
      const Dataset& ev = eval_set ? *eval_set : ds;
      const auto e = evaluate(model, ev, cfg.eval_attack);
      st.clean_accuracy = e.clean_accuracy;
      st.robust_accuracy = e.robust_accuracy;
    }
    out.curve.push_back(st);
  }
  out.model = std::move(model);
  return out;
}

}  // namespace detail

/// Clean minibatch SGD. `eval_set` feeds the per-epoch accuracy columns and
/// defaults to the training data.
inline TrainResult train_standard(MlpModel model, const Dataset& ds, const TrainConfig& cfg,
                                  const Dataset* eval_set = nullptr) {
  TrainConfig c = cfg;
  c.adversarial.reset();
  return detail::train_loop(std::move(model), ds, c, eval_set);
}

/// Min-max training; cfg.adversarial must be set. An inner eps of 0 reduces
/// to standard training exactly.
inline TrainResult train_adversarial(MlpModel model, const Dataset& ds, const TrainConfig& cfg,
                                     const Dataset* eval_set = nullptr) {
  if (!cfg.adversarial) throw ConfigError("train_adversarial: no inner attack configured");
  return detail::train_loop(std::move(model), ds, cfg, eval_set);
}

inline void write_curve_csv(std::ostream& os, std::span<const EpochStats> curve) {
  os << "epoch,train_loss,clean_acc,robust_acc\n";
  for (const auto& s : curve) {
    os << s.epoch << ',' << fmt_num(s.train_loss) << ',' << fmt_num(s.clean_accuracy) << ','
       << fmt_num(s.robust_accuracy) << '\n';
  }
}

}  // namespace rgd

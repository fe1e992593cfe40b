#pragma once

// Classifier MLP and the one-hidden-layer ReLU regression model used for the
// step-gain bound, with exact reverse-mode gradients for both.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rgd/errors.hpp"
#include "rgd/rng.hpp"
#include "rgd/tensor.hpp"

namespace rgd {

enum class LossKind { CrossEntropy, MseTheory };

inline const char* to_string(LossKind k) {
  return k == LossKind::CrossEntropy ? "cross_entropy" : "mse_theory";
}

/// Supervision for one sample: a class index (cross-entropy) or a real
/// regression target y* (MSE).
class Target {
 public:
  static Target label(int c) { return Target(true, c, 0.0); }
  static Target value(double y) { return Target(false, 0, y); }

  bool is_label() const noexcept { return is_label_; }

  int class_index() const {
    if (!is_label_) throw ConfigError("target holds a real value, not a class label");
    return label_;
  }
  double real_value() const {
    if (is_label_) throw ConfigError("target holds a class label, not a real value");
    return value_;
  }

 private:
  Target(bool is_label, int label, double value) : is_label_(is_label), label_(label), value_(value) {}

  bool is_label_;
  int label_;
  double value_;
};

inline double relu(double v) { return v > 0.0 ? v : 0.0; }

/// f(x; w) = w1ᵀ relu(w2 x), regression output, no biases.
struct TheoryModel {
  Tensor w1;  // [m]  output weights
  Tensor w2;  // [m x n] first-layer weights

  TheoryModel(Tensor output_weights, Tensor hidden_weights)
      : w1(std::move(output_weights)), w2(std::move(hidden_weights)) {
    if (w1.rank() != 1 || w2.rank() != 2 || w2.rows() != w1.size()) {
      throw DimensionError("TheoryModel: w1 " + shape_str(w1.shape()) + " incompatible with w2 " +
                           shape_str(w2.shape()));
    }
    if (!w1.all_finite() || !w2.all_finite()) throw DomainError("TheoryModel: non-finite weight");
  }

  std::size_t hidden_dim() const { return w1.size(); }
  std::size_t input_dim() const { return w2.cols(); }
};

struct DenseLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

/// Affine layers with ReLU between them and a linear head producing logits.
struct MlpModel {
  std::vector<DenseLayer> layers;

  MlpModel() = default;
  explicit MlpModel(std::vector<DenseLayer> ls) : layers(std::move(ls)) { validate(); }

  void validate() const {
    if (layers.empty()) throw DimensionError("MlpModel: at least one layer required");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      if (L.weight.rank() != 2 || L.bias.rank() != 1 || L.bias.size() != L.weight.rows()) {
        throw DimensionError("MlpModel: layer " + std::to_string(l) + " weight " +
                             shape_str(L.weight.shape()) + " bias " + shape_str(L.bias.shape()));
      }
      if (l > 0 && layers[l - 1].out_dim() != L.in_dim()) {
        throw DimensionError("MlpModel: layer " + std::to_string(l) + " expects " +
                             std::to_string(L.in_dim()) + " inputs but previous layer emits " +
                             std::to_string(layers[l - 1].out_dim()));
      }
    }
  }

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& L : layers) n += L.weight.size() + L.bias.size();
    return n;
  }

  /// He-normal weights, zero biases. `dims` lists every width including input
  /// and output, e.g. {16, 64, 64, 2}.
  static MlpModel random(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw ConfigError("MlpModel::random: need at least input and output dims");
    Rng rng(seed);
    std::vector<DenseLayer> ls;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const std::size_t in = dims[l], out = dims[l + 1];
      const double stddev = std::sqrt(2.0 / static_cast<double>(in));
      std::vector<double> w(in * out);
      for (double& v : w) v = rng.normal(0.0, stddev);
      ls.push_back({Tensor({out, in}, std::move(w)), Tensor({out})});
    }
    return MlpModel(std::move(ls));
  }

  /// The regression model as a bias-free two-layer MLP with a scalar head.
  static MlpModel from_theory(const TheoryModel& t) {
    std::vector<DenseLayer> ls;
    ls.push_back({t.w2, Tensor({t.hidden_dim()})});
    ls.push_back({Tensor({1, t.hidden_dim()}, t.w1.values()), Tensor({1})});
    return MlpModel(std::move(ls));
  }
};

namespace detail {

inline void require_input(std::size_t expected, std::size_t got, const char* who) {
  if (expected != got) {
    throw DimensionError(std::string(who) + ": expected input of length " + std::to_string(expected) +
                         ", got " + std::to_string(got));
  }
}

/// z = W a + b, accumulation starts from the bias and runs left to right.
inline void affine(const DenseLayer& L, std::span<const double> a, std::span<double> z) {
  const std::size_t out = L.out_dim(), in = L.in_dim();
  const double* w = L.weight.data().data();
  for (std::size_t i = 0; i < out; ++i) {
    double acc = L.bias[i];
    const double* wi = w + i * in;
    for (std::size_t j = 0; j < in; ++j) acc += wi[j] * a[j];
    z[i] = acc;
  }
}

/// Pre-activations of every layer for one input.
struct MlpTape {
  std::vector<std::vector<double>> pre;   // z_l
  std::vector<std::vector<double>> post;  // a_l, post[0] = input
};

inline MlpTape record_forward(const MlpModel& model, std::span<const double> x) {
  MlpTape tape;
  tape.post.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& L = model.layers[l];
    std::vector<double> z(L.out_dim());
    affine(L, tape.post.back(), z);
    std::vector<double> a(z);
    if (l + 1 < model.layers.size()) {
      for (double& v : a) v = relu(v);
    }
    tape.pre.push_back(std::move(z));
    tape.post.push_back(std::move(a));
  }
  return tape;
}

inline double log_sum_exp(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward evaluation and losses

inline double forward_theory(const TheoryModel& model, std::span<const double> x) {
  detail::require_input(model.input_dim(), x.size(), "forward_theory");
  const std::size_t m = model.hidden_dim(), n = model.input_dim();
  double f = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += model.w2(i, j) * x[j];
    f += model.w1[i] * relu(z);
  }
  return f;
}
inline double forward_theory(const TheoryModel& model, const Tensor& x) {
  return forward_theory(model, x.data());
}

/// g = ½ (f(x) − y*)².
inline double loss_theory(const TheoryModel& model, std::span<const double> x, double y_star) {
  const double r = forward_theory(model, x) - y_star;
  return 0.5 * r * r;
}
inline double loss_theory(const TheoryModel& model, const Tensor& x, double y_star) {
  return loss_theory(model, x.data(), y_star);
}

inline Tensor forward_mlp(const MlpModel& model, std::span<const double> x) {
  detail::require_input(model.input_dim(), x.size(), "forward_mlp");
  std::vector<double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& L = model.layers[l];
    std::vector<double> z(L.out_dim());
    detail::affine(L, a, z);
    if (l + 1 < model.layers.size()) {
      for (double& v : z) v = relu(v);
    }
    a = std::move(z);
  }
  return Tensor::vector(std::move(a));
}
inline Tensor forward_mlp(const MlpModel& model, const Tensor& x) { return forward_mlp(model, x.data()); }

/// −log softmax(logits)[label], computed through a max-shifted log-sum-exp.
inline double cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw DimensionError("cross_entropy: label " + std::to_string(label) + " outside " +
                         std::to_string(logits.size()) + " classes");
  }
  return detail::log_sum_exp(logits) - logits[static_cast<std::size_t>(label)];
}

inline int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline int predict(const MlpModel& model, std::span<const double> x) {
  return argmax(forward_mlp(model, x).data());
}

namespace detail {

inline void check_pairing(const MlpModel& model, const Target& target, LossKind kind) {
  if (kind == LossKind::CrossEntropy) {
    if (!target.is_label()) throw ConfigError("cross-entropy loss needs a class-label target");
    if (model.output_dim() < 2) throw ConfigError("cross-entropy loss needs at least two logits");
    const int y = target.class_index();
    if (y < 0 || static_cast<std::size_t>(y) >= model.output_dim()) {
      throw ConfigError("label " + std::to_string(y) + " outside [0, " + std::to_string(model.output_dim()) + ")");
    }
  } else {
    if (target.is_label()) throw ConfigError("MSE loss needs a real-valued target");
    if (model.output_dim() != 1) throw ConfigError("MSE loss needs a scalar-head model");
  }
}

inline void check_pairing(const TheoryModel&, const Target& target, LossKind kind) {
  if (kind != LossKind::MseTheory) throw ConfigError("TheoryModel supports only the MSE loss");
  if (target.is_label()) throw ConfigError("MSE loss needs a real-valued target");
}

/// dLoss/dlogits, and the loss itself.
inline double head_gradient(std::span<const double> logits, const Target& target, LossKind kind,
                            std::span<double> dlogits) {
  if (kind == LossKind::CrossEntropy) {
    const int y = target.class_index();
    const double lse = log_sum_exp(logits);
    for (std::size_t k = 0; k < logits.size(); ++k) dlogits[k] = std::exp(logits[k] - lse);
    dlogits[static_cast<std::size_t>(y)] -= 1.0;
    return lse - logits[static_cast<std::size_t>(y)];
  }
  const double r = logits[0] - target.real_value();
  dlogits[0] = r;
  return 0.5 * r * r;
}

}  // namespace detail

inline double loss(const MlpModel& model, std::span<const double> x, const Target& target, LossKind kind) {
  detail::check_pairing(model, target, kind);
  const Tensor logits = forward_mlp(model, x);
  if (kind == LossKind::CrossEntropy) return cross_entropy(logits.data(), target.class_index());
  const double r = logits[0] - target.real_value();
  return 0.5 * r * r;
}

inline double loss(const TheoryModel& model, std::span<const double> x, const Target& target,
                   LossKind kind) {
  detail::check_pairing(model, target, kind);
  return loss_theory(model, x, target.real_value());
}

// ---------------------------------------------------------------------------
// Gradients

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

/// Loss at x and its exact gradient with respect to x. ReLU'(0) is taken as 0.
inline LossAndGrad loss_and_grad_input(const MlpModel& model, std::span<const double> x,
                                       const Target& target, LossKind kind) {
  detail::check_pairing(model, target, kind);
  detail::require_input(model.input_dim(), x.size(), "grad_input");
  const auto tape = detail::record_forward(model, x);
  const std::size_t L = model.layers.size();
  std::vector<double> dz(model.output_dim());
  const double value = detail::head_gradient(tape.pre.back(), target, kind, dz);
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = model.layers[l];
    std::vector<double> da(layer.in_dim(), 0.0);
    for (std::size_t i = 0; i < layer.out_dim(); ++i) {
      const double g = dz[i];
      if (g == 0.0) continue;
      const auto wi = layer.weight.row(i);
      for (std::size_t j = 0; j < da.size(); ++j) da[j] += wi[j] * g;
    }
    if (l > 0) {
      const auto& z = tape.pre[l - 1];
      for (std::size_t j = 0; j < da.size(); ++j) {
        if (!(z[j] > 0.0)) da[j] = 0.0;
      }
    }
    dz = std::move(da);
  }
  return {value, Tensor::vector(std::move(dz))};
}

inline LossAndGrad loss_and_grad_input(const TheoryModel& model, std::span<const double> x,
                                       const Target& target, LossKind kind) {
  detail::check_pairing(model, target, kind);
  detail::require_input(model.input_dim(), x.size(), "grad_input");
  const std::size_t m = model.hidden_dim(), n = model.input_dim();
  std::vector<double> active(m);
  double f = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += model.w2(i, j) * x[j];
    active[i] = z > 0.0 ? 1.0 : 0.0;
    f += model.w1[i] * relu(z);
  }
  const double r = f - target.real_value();
  std::vector<double> grad(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double c = r * model.w1[i] * active[i];
    if (c == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) grad[j] += c * model.w2(i, j);
  }
  return {0.5 * r * r, Tensor::vector(std::move(grad))};
}

template <typename Model>
Tensor grad_input(const Model& model, const Tensor& x, const Target& target, LossKind kind) {
  return loss_and_grad_input(model, x.data(), target, kind).grad;
}

/// Parameter-shaped gradient of an MLP (same layout as MlpModel::layers).
struct MlpGradients {
  std::vector<DenseLayer> layers;
  double mean_loss = 0.0;
};

inline MlpGradients zero_gradients(const MlpModel& model) {
  MlpGradients g;
  for (const auto& L : model.layers) g.layers.push_back({Tensor(L.weight.shape()), Tensor(L.bias.shape())});
  return g;
}

/// Mean-over-batch gradient of the loss with respect to every weight and bias.
/// `inputs` is [batch x in_dim]; one target per row.
inline MlpGradients grad_params(const MlpModel& model, const Tensor& inputs, std::span<const Target> targets,
                                LossKind kind) {
  if (inputs.empty() || targets.empty()) throw DomainError("grad_params: empty batch");
  if (inputs.rank() != 2 || inputs.rows() != targets.size()) {
    throw DimensionError("grad_params: " + std::to_string(targets.size()) + " targets for inputs " +
                         shape_str(inputs.shape()));
  }
  MlpGradients g = zero_gradients(model);
  const std::size_t L = model.layers.size();
  double total = 0.0;
  for (std::size_t s = 0; s < inputs.rows(); ++s) {
    detail::check_pairing(model, targets[s], kind);
    const auto x = inputs.row(s);
    detail::require_input(model.input_dim(), x.size(), "grad_params");
    const auto tape = detail::record_forward(model, x);
    std::vector<double> dz(model.output_dim());
    total += detail::head_gradient(tape.pre.back(), targets[s], kind, dz);
    for (std::size_t l = L; l-- > 0;) {
      const auto& layer = model.layers[l];
      auto& gl = g.layers[l];
      const auto& a = tape.post[l];
      std::vector<double> da(layer.in_dim(), 0.0);
      for (std::size_t i = 0; i < layer.out_dim(); ++i) {
        const double d = dz[i];
        gl.bias[i] += d;
        if (d == 0.0) continue;
        auto gw = gl.weight.row(i);
        const auto wi = layer.weight.row(i);
        for (std::size_t j = 0; j < a.size(); ++j) {
          gw[j] += d * a[j];
          da[j] += wi[j] * d;
        }
      }
      if (l > 0) {
        const auto& z = tape.pre[l - 1];
        for (std::size_t j = 0; j < da.size(); ++j) {
          if (!(z[j] > 0.0)) da[j] = 0.0;
        }
      }
      dz = std::move(da);
    }
  }
  const double inv = 1.0 / static_cast<double>(inputs.rows());
  for (auto& gl : g.layers) {
    for (double& v : gl.weight.data()) v *= inv;
    for (double& v : gl.bias.data()) v *= inv;
  }
  g.mean_loss = total * inv;
  return g;
}

}  // namespace rgd

#pragma once

// Minimal dense network engine: forward/backward passes, Adam, target
// mixing and a central finite-difference gradient checker. Everything is
// 64-bit and single-threaded per network.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aekick/common.hpp"

namespace aekick {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

enum class Activation { kRelu, kLinear, kSoftmax };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
  Matrix weights;               // fan_in x fan_out
  std::vector<double> biases;   // fan_out
  Activation activation = Activation::kLinear;

  bool operator==(const Layer&) const = default;
};

struct DenseNet {
  std::vector<Layer> layers;

  /// Builds input -> hidden... -> output with relu hidden units and the
  /// given output activation. Weights and biases are drawn uniformly from
  /// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static DenseNet make(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                       std::size_t output_dim, Activation output_activation, Rng& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  bool operator==(const DenseNet&) const = default;
};

/// values[0] is the input batch; values[i + 1] is the post-activation output
/// of layer i.
struct Activations {
  std::vector<Matrix> values;
  const Matrix& output() const { return values.back(); }
};

struct LayerGradient {
  Matrix weights;
  std::vector<double> biases;
};

/// Parameter gradients are batch means. `input` holds the per-sample
/// gradient with respect to each input row (not averaged), so it can be
/// chained into an upstream network.
struct NetGradients {
  std::vector<LayerGradient> layers;
  Matrix input;
};

Activations forward(const DenseNet& net, const Matrix& batch);

/// Convenience: output of a single observation.
std::vector<double> predict(const DenseNet& net, std::span<const double> x);

/// `output_gradient` row b is d loss_b / d output_b; the returned parameter
/// gradients are d mean_b(loss_b) / d theta.
NetGradients backward(const DenseNet& net, const Activations& acts,
                      const Matrix& output_gradient);

NetGradients zero_gradients_like(const DenseNet& net);
void add_scaled(NetGradients& into, const NetGradients& g, double scale);

struct AdamState {
  std::vector<LayerGradient> first_moment;
  std::vector<LayerGradient> second_moment;
  long long step = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_net(const DenseNet& net, double learning_rate = 1e-4);
};

/// Bias-corrected Adam update. A gradient whose entries are all exactly zero
/// leaves parameters and state untouched. Throws NumericError (and changes
/// nothing) on any non-finite gradient entry.
void adam_step(DenseNet& params, const NetGradients& gradients, AdamState& state);

/// target <- tau * online + (1 - tau) * target, elementwise.
void soft_update(DenseNet& target, const DenseNet& online, double tau);

/// Loss value together with its analytic parameter gradients.
struct LossAndGrad {
  double loss = 0.0;
  NetGradients grads;
};

using LossProcedure = std::function<LossAndGrad(const DenseNet&)>;

struct GradCheckEntry {
  std::string name;          // e.g. "layer1.weights"
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// Compares analytic gradients against central differences with step 1e-5.
/// Relative error per entry is |a - n| / max(|a|, |n|, 1e-6). Throws
/// ContractError if two evaluations at the same parameters disagree.
GradCheckReport grad_check(const DenseNet& net, const LossProcedure& loss, double tolerance);

bool all_finite(std::span<const double> xs);

}  // namespace aekick

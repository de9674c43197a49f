#include "aekick/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace aekick {

namespace {

void apply_activation(Activation act, Matrix& m) {
  switch (act) {
    case Activation::kLinear:
      return;
    case Activation::kRelu:
      for (double& v : m.data) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::kSoftmax:
      for (std::size_t r = 0; r < m.rows; ++r) {
        auto row = m.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& v : row) {
          v = std::exp(v - mx);
          sum += v;
        }
        for (double& v : row) v /= sum;
      }
      return;
  }
}

// Turns d loss / d output into d loss / d pre-activation, in place.
void activation_backward(Activation act, const Matrix& out, Matrix& grad) {
  switch (act) {
    case Activation::kLinear:
      return;
    case Activation::kRelu:
      for (std::size_t i = 0; i < grad.data.size(); ++i) {
        if (out.data[i] <= 0.0) grad.data[i] = 0.0;
      }
      return;
    case Activation::kSoftmax:
      for (std::size_t r = 0; r < grad.rows; ++r) {
        auto g = grad.row(r);
        auto y = out.row(r);
        double dot = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = y[j] * (g[j] - dot);
      }
      return;
  }
}

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows << "x" << m.cols;
  return os.str();
}

}  // namespace

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols) throw ShapeError("Matrix::from_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kLinear: return "linear";
    case Activation::kSoftmax: return "softmax";
  }
  return "linear";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "linear") return Activation::kLinear;
  if (s == "softmax") return Activation::kSoftmax;
  throw FormatError("unknown activation '" + s + "'");
}

DenseNet DenseNet::make(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        std::size_t output_dim, Activation output_activation, Rng& rng) {
  DenseNet net;
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output_dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer layer;
    layer.weights = Matrix(dims[i], dims[i + 1]);
    layer.biases.assign(dims[i + 1], 0.0);
    layer.activation = (i + 2 == dims.size()) ? output_activation : Activation::kRelu;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    std::uniform_real_distribution<double> init(-bound, bound);
    for (double& w : layer.weights.data) w = init(rng);
    for (double& b : layer.biases) b = init(rng);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

std::size_t DenseNet::input_dim() const {
  return layers.empty() ? 0 : layers.front().weights.rows;
}

std::size_t DenseNet::output_dim() const {
  return layers.empty() ? 0 : layers.back().weights.cols;
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.data.size() + l.biases.size();
  return n;
}

Activations forward(const DenseNet& net, const Matrix& batch) {
  if (net.layers.empty()) throw ShapeError("forward: empty network");
  if (batch.cols != net.input_dim()) {
    throw ShapeError("forward: batch is " + shape_str(batch) + " but network expects " +
                     std::to_string(net.input_dim()) + " input columns");
  }
  Activations acts;
  acts.values.reserve(net.layers.size() + 1);
  acts.values.push_back(batch);
  for (const Layer& layer : net.layers) {
    const Matrix& in = acts.values.back();
    const std::size_t fan_in = layer.weights.rows;
    const std::size_t fan_out = layer.weights.cols;
    if (in.cols != fan_in || layer.biases.size() != fan_out) {
      throw ShapeError("forward: layer dimensions do not chain");
    }
    Matrix out(in.rows, fan_out);
    for (std::size_t b = 0; b < in.rows; ++b) {
      double* o = out.data.data() + b * fan_out;
      std::copy(layer.biases.begin(), layer.biases.end(), o);
      const double* x = in.data.data() + b * fan_in;
      for (std::size_t k = 0; k < fan_in; ++k) {
        const double xk = x[k];
        if (xk == 0.0) continue;
        const double* w = layer.weights.data.data() + k * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) o[j] += xk * w[j];
      }
    }
    apply_activation(layer.activation, out);
    acts.values.push_back(std::move(out));
  }
  return acts;
}

std::vector<double> predict(const DenseNet& net, std::span<const double> x) {
  Matrix in(1, x.size());
  std::copy(x.begin(), x.end(), in.data.begin());
  return forward(net, in).output().data;
}

NetGradients backward(const DenseNet& net, const Activations& acts,
                      const Matrix& output_gradient) {
  if (acts.values.size() != net.layers.size() + 1) {
    throw ShapeError("backward: activations do not match network depth");
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& w = net.layers[i].weights;
    if (acts.values[i].cols != w.rows || acts.values[i + 1].cols != w.cols ||
        acts.values[i].rows != acts.values[i + 1].rows) {
      throw ShapeError("backward: stale or mismatched activations at layer " + std::to_string(i));
    }
  }
  const Matrix& out = acts.output();
  if (output_gradient.rows != out.rows || output_gradient.cols != out.cols) {
    throw ShapeError("backward: output gradient is " + shape_str(output_gradient) +
                     " but output is " + shape_str(out));
  }
  const std::size_t batch = out.rows;
  const double inv_batch = batch > 0 ? 1.0 / static_cast<double>(batch) : 0.0;

  NetGradients grads;
  grads.layers.resize(net.layers.size());
  Matrix delta = output_gradient;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& layer = net.layers[li];
    const Matrix& in = acts.values[li];
    activation_backward(layer.activation, acts.values[li + 1], delta);

    const std::size_t fan_in = layer.weights.rows;
    const std::size_t fan_out = layer.weights.cols;
    LayerGradient& g = grads.layers[li];
    g.weights = Matrix(fan_in, fan_out);
    g.biases.assign(fan_out, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* d = delta.data.data() + b * fan_out;
      const double* x = in.data.data() + b * fan_in;
      for (std::size_t j = 0; j < fan_out; ++j) g.biases[j] += d[j];
      for (std::size_t k = 0; k < fan_in; ++k) {
        const double xk = x[k];
        if (xk == 0.0) continue;
        double* gw = g.weights.data.data() + k * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) gw[j] += xk * d[j];
      }
    }
    for (double& v : g.weights.data) v *= inv_batch;
    for (double& v : g.biases) v *= inv_batch;

    Matrix prev(batch, fan_in);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* d = delta.data.data() + b * fan_out;
      double* p = prev.data.data() + b * fan_in;
      for (std::size_t k = 0; k < fan_in; ++k) {
        const double* w = layer.weights.data.data() + k * fan_out;
        double s = 0.0;
        for (std::size_t j = 0; j < fan_out; ++j) s += w[j] * d[j];
        p[k] = s;
      }
    }
    delta = std::move(prev);
  }
  grads.input = std::move(delta);
  return grads;
}

NetGradients zero_gradients_like(const DenseNet& net) {
  NetGradients g;
  for (const auto& l : net.layers) {
    g.layers.push_back({Matrix(l.weights.rows, l.weights.cols),
                        std::vector<double>(l.biases.size(), 0.0)});
  }
  return g;
}

void add_scaled(NetGradients& into, const NetGradients& g, double scale) {
  if (into.layers.size() != g.layers.size()) throw ShapeError("add_scaled: depth mismatch");
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    auto& a = into.layers[i];
    const auto& b = g.layers[i];
    if (a.weights.data.size() != b.weights.data.size() || a.biases.size() != b.biases.size()) {
      throw ShapeError("add_scaled: layer shape mismatch");
    }
    for (std::size_t j = 0; j < a.weights.data.size(); ++j) a.weights.data[j] += scale * b.weights.data[j];
    for (std::size_t j = 0; j < a.biases.size(); ++j) a.biases[j] += scale * b.biases[j];
  }
}

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

AdamState AdamState::for_net(const DenseNet& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.first_moment = zero_gradients_like(net).layers;
  s.second_moment = s.first_moment;
  return s;
}

void adam_step(DenseNet& params, const NetGradients& gradients, AdamState& state) {
  const std::size_t depth = params.layers.size();
  if (gradients.layers.size() != depth || state.first_moment.size() != depth ||
      state.second_moment.size() != depth) {
    throw ShapeError("adam_step: depth mismatch between params, gradients and state");
  }
  bool any_nonzero = false;
  for (std::size_t i = 0; i < depth; ++i) {
    const auto& p = params.layers[i];
    const auto& g = gradients.layers[i];
    if (g.weights.data.size() != p.weights.data.size() || g.biases.size() != p.biases.size() ||
        state.first_moment[i].weights.data.size() != p.weights.data.size() ||
        state.first_moment[i].biases.size() != p.biases.size()) {
      throw ShapeError("adam_step: shape mismatch at layer " + std::to_string(i));
    }
    if (!all_finite(g.weights.data) || !all_finite(g.biases)) {
      throw NumericError("adam_step: non-finite gradient at layer " + std::to_string(i));
    }
    for (double v : g.weights.data) any_nonzero |= (v != 0.0);
    for (double v : g.biases) any_nonzero |= (v != 0.0);
  }
  if (!any_nonzero) return;

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  };
  for (std::size_t i = 0; i < depth; ++i) {
    auto& p = params.layers[i];
    const auto& g = gradients.layers[i];
    update(p.weights.data, g.weights.data, state.first_moment[i].weights.data,
           state.second_moment[i].weights.data);
    update(p.biases, g.biases, state.first_moment[i].biases, state.second_moment[i].biases);
  }
}

void soft_update(DenseNet& target, const DenseNet& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ContractError("soft_update: tau must lie in [0, 1]");
  if (target.layers.size() != online.layers.size()) {
    throw ShapeError("soft_update: architecture mismatch");
  }
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    auto& t = target.layers[i];
    const auto& o = online.layers[i];
    if (t.weights.rows != o.weights.rows || t.weights.cols != o.weights.cols ||
        t.biases.size() != o.biases.size() || t.activation != o.activation) {
      throw ShapeError("soft_update: architecture mismatch at layer " + std::to_string(i));
    }
  }
  if (tau == 0.0) return;
  if (tau == 1.0) {
    target = online;
    return;
  }
  auto mix = [tau](std::vector<double>& t, const std::vector<double>& o) {
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = tau * o[j] + (1.0 - tau) * t[j];
  };
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    mix(target.layers[i].weights.data, online.layers[i].weights.data);
    mix(target.layers[i].biases, online.layers[i].biases);
  }
}

GradCheckReport grad_check(const DenseNet& net, const LossProcedure& loss, double tolerance) {
  const LossAndGrad a = loss(net);
  const LossAndGrad b = loss(net);
  bool same = a.loss == b.loss && a.grads.layers.size() == b.grads.layers.size();
  for (std::size_t i = 0; same && i < a.grads.layers.size(); ++i) {
    same = a.grads.layers[i].weights == b.grads.layers[i].weights &&
           a.grads.layers[i].biases == b.grads.layers[i].biases;
  }
  if (!same) throw ContractError("grad_check: loss procedure is not deterministic");
  if (a.grads.layers.size() != net.layers.size()) {
    throw ShapeError("grad_check: gradient depth does not match network");
  }

  constexpr double kFloor = 1e-6;
  const double h = kFiniteDifferenceStep;
  auto rel_err = [](double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kFloor});
    return std::abs(analytic - numeric) / denom;
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  DenseNet probe = net;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto check = [&](std::vector<double>& params, const std::vector<double>& analytic,
                     const std::string& name) {
      if (params.size() != analytic.size()) throw ShapeError("grad_check: gradient shape mismatch");
      GradCheckEntry entry{name, 0.0};
      for (std::size_t j = 0; j < params.size(); ++j) {
        const double saved = params[j];
        params[j] = saved + h;
        const double up = loss(probe).loss;
        params[j] = saved - h;
        const double down = loss(probe).loss;
        params[j] = saved;
        const double numeric = (up - down) / (2.0 * h);
        entry.max_relative_error = std::max(entry.max_relative_error, rel_err(analytic[j], numeric));
      }
      report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
      report.entries.push_back(entry);
    };
    const std::string prefix = "layer" + std::to_string(li);
    check(probe.layers[li].weights.data, a.grads.layers[li].weights.data, prefix + ".weights");
    check(probe.layers[li].biases, a.grads.layers[li].biases, prefix + ".biases");
  }
  report.pass = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace aekick

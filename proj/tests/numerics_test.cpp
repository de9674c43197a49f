#include <cmath>
#include <filesystem>

#include "aekick/numerics.hpp"
#include "aekick/snapshot.hpp"
#include "gtest/gtest.h"

using namespace aekick;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : m.data) v = u(rng);
  return m;
}

// Half squared error against fixed targets, summed over outputs, averaged
// over the batch. Output gradient is (y_hat - y).
LossAndGrad half_mse(const DenseNet& net, const Matrix& x, const Matrix& y) {
  auto acts = forward(net, x);
  const Matrix& out = acts.output();
  Matrix g(out.rows, out.cols);
  double loss = 0.0;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double d = out.data[i] - y.data[i];
    loss += 0.5 * d * d;
    g.data[i] = d;
  }
  return {loss / static_cast<double>(out.rows), backward(net, acts, g)};
}

}  // namespace

TEST(Forward, ZeroWeightsEmitBias) {
  DenseNet net;
  Layer l;
  l.weights = Matrix(3, 2);
  l.biases = {0.25, -1.5};
  l.activation = Activation::kLinear;
  net.layers.push_back(l);
  Rng rng(1);
  auto out = forward(net, random_matrix(5, 3, rng)).output();
  ASSERT_EQ(out.rows, 5u);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_EQ(out(r, 0), 0.25);
    EXPECT_EQ(out(r, 1), -1.5);
  }
}

TEST(Forward, ReluClampsNegativePreActivation) {
  DenseNet net;
  Layer l;
  l.weights = Matrix::from_rows({{1.0, -1.0}});
  l.biases = {0.0, 0.0};
  l.activation = Activation::kRelu;
  net.layers.push_back(l);
  auto out = forward(net, Matrix::from_rows({{2.0}})).output();
  EXPECT_EQ(out(0, 0), 2.0);
  EXPECT_EQ(out(0, 1), 0.0);
}

TEST(Forward, ShapeContractAndErrors) {
  Rng rng(2);
  auto net = DenseNet::make(4, {8, 8}, 3, Activation::kLinear, rng);
  EXPECT_EQ(forward(net, random_matrix(7, 4, rng)).output().rows, 7u);
  EXPECT_EQ(forward(net, random_matrix(7, 4, rng)).output().cols, 3u);
  EXPECT_THROW(forward(net, random_matrix(2, 5, rng)), ShapeError);
}

TEST(Forward, DeterministicBitwise) {
  Rng rng(3);
  auto net = DenseNet::make(6, {16, 16}, 4, Activation::kLinear, rng);
  auto x = random_matrix(9, 6, rng);
  EXPECT_EQ(forward(net, x).output().data, forward(net, x).output().data);
}

TEST(Forward, SoftmaxRowsSumToOne) {
  Rng rng(4);
  auto net = DenseNet::make(3, {5}, 4, Activation::kSoftmax, rng);
  auto out = forward(net, random_matrix(6, 3, rng, 3.0)).output();
  for (std::size_t r = 0; r < out.rows; ++r) {
    double s = 0.0;
    for (double v : out.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Backward, ZeroOutputGradientGivesZeroGradients) {
  Rng rng(5);
  auto net = DenseNet::make(4, {8}, 2, Activation::kLinear, rng);
  auto x = random_matrix(3, 4, rng);
  auto acts = forward(net, x);
  auto g = backward(net, acts, Matrix(3, 2));
  for (const auto& l : g.layers) {
    for (double v : l.weights.data) EXPECT_EQ(v, 0.0);
    for (double v : l.biases) EXPECT_EQ(v, 0.0);
  }
}

TEST(Backward, SingleLinearLayerMatchesClosedForm) {
  Rng rng(6);
  auto net = DenseNet::make(3, {}, 2, Activation::kLinear, rng);
  const std::size_t batch = 5;
  auto x = random_matrix(batch, 3, rng);
  auto y = random_matrix(batch, 2, rng);
  auto lg = half_mse(net, x, y);
  auto yhat = forward(net, x).output();
  // dW = X^T (Y_hat - Y) / B, db = column mean of (Y_hat - Y).
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < 2; ++j) {
      double expect = 0.0;
      for (std::size_t b = 0; b < batch; ++b) expect += x(b, k) * (yhat(b, j) - y(b, j));
      expect /= batch;
      EXPECT_NEAR(lg.grads.layers[0].weights(k, j), expect, 1e-14);
    }
  }
  for (std::size_t j = 0; j < 2; ++j) {
    double expect = 0.0;
    for (std::size_t b = 0; b < batch; ++b) expect += yhat(b, j) - y(b, j);
    EXPECT_NEAR(lg.grads.layers[0].biases[j], expect / batch, 1e-14);
  }
}

TEST(Backward, StaleActivationsRejected) {
  Rng rng(7);
  auto net = DenseNet::make(4, {8}, 2, Activation::kLinear, rng);
  auto other = DenseNet::make(4, {6}, 2, Activation::kLinear, rng);
  auto acts = forward(other, random_matrix(3, 4, rng));
  EXPECT_THROW(backward(net, acts, Matrix(3, 2)), ShapeError);
  auto good = forward(net, random_matrix(3, 4, rng));
  EXPECT_THROW(backward(net, good, Matrix(2, 2)), ShapeError);
}

// Property: over 24 random architectures, analytic gradients agree with a
// central finite-difference loop written here (independent of grad_check).
TEST(Backward, MatchesFiniteDifferencesOnRandomNets) {
  for (int cfg = 0; cfg < 24; ++cfg) {
    Rng rng(100 + cfg);
    const std::size_t in = 2 + cfg % 4;
    const std::size_t out = 1 + cfg % 3;
    std::vector<std::size_t> hidden;
    for (int h = 0; h < cfg % 3; ++h) hidden.push_back(3 + (cfg + h) % 5);
    const Activation out_act = cfg % 4 == 3 ? Activation::kSoftmax : Activation::kLinear;
    auto net = DenseNet::make(in, hidden, out, out_act, rng);
    auto x = random_matrix(4, in, rng);
    auto y = random_matrix(4, out, rng);
    auto analytic = half_mse(net, x, y).grads;
    const double h = 1e-5;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
      for (std::size_t j = 0; j < net.layers[li].weights.data.size(); ++j) {
        DenseNet p = net, m = net;
        p.layers[li].weights.data[j] += h;
        m.layers[li].weights.data[j] -= h;
        const double num = (half_mse(p, x, y).loss - half_mse(m, x, y).loss) / (2 * h);
        const double a = analytic.layers[li].weights.data[j];
        const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6});
        EXPECT_LE(rel, 1e-4) << "cfg " << cfg << " layer " << li << " w" << j;
      }
      for (std::size_t j = 0; j < net.layers[li].biases.size(); ++j) {
        DenseNet p = net, m = net;
        p.layers[li].biases[j] += h;
        m.layers[li].biases[j] -= h;
        const double num = (half_mse(p, x, y).loss - half_mse(m, x, y).loss) / (2 * h);
        const double a = analytic.layers[li].biases[j];
        const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6});
        EXPECT_LE(rel, 1e-4) << "cfg " << cfg << " layer " << li << " b" << j;
      }
    }
  }
}

TEST(Backward, InputGradientIsPerSample) {
  Rng rng(8);
  auto net = DenseNet::make(3, {4}, 2, Activation::kLinear, rng);
  auto x = random_matrix(3, 3, rng);
  auto y = random_matrix(3, 2, rng);
  auto g = half_mse(net, x, y).grads.input;
  // Perturbing sample b's input changes the summed loss by g(b, k).
  auto summed = [&](const Matrix& xx) { return half_mse(net, xx, y).loss * 3.0; };
  const double h = 1e-6;
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t k = 0; k < 3; ++k) {
      Matrix p = x, m = x;
      p(b, k) += h;
      m(b, k) -= h;
      EXPECT_NEAR(g(b, k), (summed(p) - summed(m)) / (2 * h), 1e-7);
    }
  }
}

TEST(Adam, ZeroGradientsLeaveParams) {
  Rng rng(9);
  auto net = DenseNet::make(3, {4}, 2, Activation::kLinear, rng);
  auto state = AdamState::for_net(net);
  // Warm the moments so the no-op holds for a non-trivial state.
  auto g = zero_gradients_like(net);
  g.layers[0].weights.data[0] = 0.3;
  adam_step(net, g, state);
  const auto before = net;
  const auto step_before = state.step;
  adam_step(net, zero_gradients_like(net), state);
  EXPECT_EQ(net, before);
  EXPECT_EQ(state.step, step_before);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Rng rng(10);
  auto net = DenseNet::make(3, {4}, 2, Activation::kLinear, rng);
  auto before = net;
  auto state = AdamState::for_net(net, 1e-4);
  auto g = zero_gradients_like(net);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (auto& l : g.layers) {
    for (double& v : l.weights.data) v = u(rng);
    for (double& v : l.biases) v = u(rng);
  }
  adam_step(net, g, state);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    for (std::size_t j = 0; j < net.layers[i].weights.data.size(); ++j) {
      const double gj = g.layers[i].weights.data[j];
      const double delta = net.layers[i].weights.data[j] - before.layers[i].weights.data[j];
      // bias-corrected moments equal g and g^2 after one step
      EXPECT_NEAR(delta, -1e-4 * gj / (std::abs(gj) + 1e-8), 1e-15);
    }
  }
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, NonFiniteGradientRejected) {
  Rng rng(11);
  auto net = DenseNet::make(3, {4}, 2, Activation::kLinear, rng);
  auto before = net;
  auto state = AdamState::for_net(net);
  auto g = zero_gradients_like(net);
  g.layers[1].biases[0] = std::nan("");
  EXPECT_THROW(adam_step(net, g, state), NumericError);
  EXPECT_EQ(net, before);
  EXPECT_EQ(state.step, 0);
}

TEST(Adam, QuadraticBowlLossDecreases) {
  // Fit a linear map; the half-MSE is a convex quadratic in the weights.
  Rng rng(12);
  auto net = DenseNet::make(3, {}, 1, Activation::kLinear, rng);
  auto state = AdamState::for_net(net, 1e-2);
  auto x = random_matrix(16, 3, rng);
  Matrix y(16, 1);
  for (std::size_t b = 0; b < 16; ++b) y(b, 0) = 2 * x(b, 0) - x(b, 1) + 0.5 * x(b, 2) + 3.0;
  double prev = half_mse(net, x, y).loss;
  for (int i = 0; i < 100; ++i) {
    auto lg = half_mse(net, x, y);
    adam_step(net, lg.grads, state);
    const double now = half_mse(net, x, y).loss;
    EXPECT_LT(now, prev) << "iteration " << i;
    prev = now;
  }
}

TEST(SoftUpdate, TauEndpointsAndMidpoint) {
  Rng rng(13);
  auto online = DenseNet::make(3, {4}, 2, Activation::kLinear, rng);
  auto target = DenseNet::make(3, {4}, 2, Activation::kLinear, rng);
  const auto original = target;

  auto t0 = target;
  soft_update(t0, online, 0.0);
  EXPECT_EQ(t0, original);

  auto half = target;
  soft_update(half, online, 0.5);
  for (std::size_t j = 0; j < half.layers[0].weights.data.size(); ++j) {
    EXPECT_DOUBLE_EQ(half.layers[0].weights.data[j],
                     0.5 * (online.layers[0].weights.data[j] + original.layers[0].weights.data[j]));
  }

  auto t1 = target;
  soft_update(t1, online, 1.0);
  EXPECT_EQ(t1, online);
  auto again = t1;
  soft_update(again, online, 1.0);
  EXPECT_EQ(again, t1);
}

TEST(SoftUpdate, ArchitectureMismatch) {
  Rng rng(14);
  auto a = DenseNet::make(3, {4}, 2, Activation::kLinear, rng);
  auto b = DenseNet::make(3, {5}, 2, Activation::kLinear, rng);
  EXPECT_THROW(soft_update(a, b, 0.5), ShapeError);
}

TEST(GradCheck, PassesOnCorrectAndFailsOnCorruptedGradients) {
  Rng rng(15);
  auto net = DenseNet::make(4, {6, 5}, 3, Activation::kLinear, rng);
  auto x = random_matrix(6, 4, rng);
  auto y = random_matrix(6, 3, rng);
  auto good = grad_check(net, [&](const DenseNet& n) { return half_mse(n, x, y); }, 1e-4);
  EXPECT_TRUE(good.pass) << good.max_relative_error;
  EXPECT_EQ(good.entries.size(), 6u);

  auto bad = grad_check(
      net,
      [&](const DenseNet& n) {
        auto lg = half_mse(n, x, y);
        lg.grads.layers[1].weights.data[2] += 0.5;
        return lg;
      },
      1e-4);
  EXPECT_FALSE(bad.pass);
  EXPECT_EQ(bad.pass, bad.max_relative_error <= bad.tolerance);
}

TEST(GradCheck, DetectsNonDeterministicLoss) {
  Rng rng(16);
  auto net = DenseNet::make(2, {}, 1, Activation::kLinear, rng);
  int calls = 0;
  auto flaky = [&](const DenseNet& n) {
    LossAndGrad lg{static_cast<double>(calls++), zero_gradients_like(n)};
    return lg;
  };
  EXPECT_THROW(grad_check(net, flaky, 1e-4), ContractError);
}

TEST(Snapshot, NetRoundTrip) {
  Rng rng(17);
  auto net = DenseNet::make(5, {7}, 3, Activation::kSoftmax, rng);
  ArrayBundle bundle;
  bundle.meta["kind"] = "test";
  append_net(bundle, "policy", net);
  const auto path = std::filesystem::temp_directory_path() / "aekick_numerics_snapshot.jsonl";
  save_bundle(bundle, path);
  auto loaded = load_bundle(path);
  EXPECT_EQ(extract_net(loaded, "policy"), net);
  EXPECT_EQ(loaded.meta.at("kind"), "test");
  EXPECT_THROW(extract_net(loaded, "critic"), FormatError);
}

#include <gtest/gtest.h>

#include <cmath>

#include "profgan/nn.hpp"

namespace profgan::nn {
namespace {

double half_square(const Matrix& y, Matrix* grad) {
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    loss += 0.5 * y.data()[i] * y.data()[i];
    if (grad) grad->data()[i] = y.data()[i];
  }
  return loss;
}

// Cross terms so every output gets a distinct, non-trivial gradient.
double mixed_loss(const Matrix& y, Matrix* grad) {
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = 0.3 + 0.1 * static_cast<double>(i % 7);
    loss += w * y.data()[i] * y.data()[i] + std::sin(y.data()[i]);
    if (grad) grad->data()[i] = 2.0 * w * y.data()[i] + std::cos(y.data()[i]);
  }
  return loss;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& x : m.data()) x = normal(rng);
  return m;
}

DenseLayer identity_layer(std::size_t n, Activation a) {
  return {Matrix::identity(n), std::vector<double>(n, 0.0), {a}};
}

TEST(Forward, IdentityLinearIsPassThrough) {
  const MultiLayerNet net({identity_layer(3, Activation::linear)});
  const Matrix x(2, 3, std::vector<double>{1, -2, 3, 0.5, 0, -7});
  EXPECT_EQ(predict(net, x), x);
}

TEST(Forward, SigmoidAndTanhAtZero) {
  const Matrix zero(4, 3);
  const auto s = predict(MultiLayerNet({identity_layer(3, Activation::sigmoid)}), zero);
  const auto t = predict(MultiLayerNet({identity_layer(3, Activation::tanh)}), zero);
  for (double v : s.data()) EXPECT_EQ(v, 0.5);
  for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, LeakyReluSlope) {
  const MultiLayerNet net({identity_layer(2, Activation::leaky_relu)});
  const auto y = predict(net, Matrix(1, 2, std::vector<double>{-1.0, 2.0}));
  EXPECT_DOUBLE_EQ(y(0, 0), -0.2);
  EXPECT_DOUBLE_EQ(y(0, 1), 2.0);
}

TEST(Forward, DimensionMismatch) {
  const MultiLayerNet net({identity_layer(3, Activation::linear)});
  EXPECT_THROW(forward(net, Matrix(1, 4)), DimensionError);
  EXPECT_THROW(MultiLayerNet({identity_layer(3, Activation::linear), identity_layer(2, Activation::linear)}),
               DimensionError);
}

TEST(Backward, HandComputedTwoByTwo) {
  // y = W x + b, L = 1/2 |y|^2, so dL/dW = y x^T, dL/db = y, dL/dx = W^T y.
  DenseLayer layer{Matrix(2, 2, std::vector<double>{1, 2, 3, 4}), {0.5, -1.0}, {Activation::linear}};
  const MultiLayerNet net({layer});
  const Matrix x(1, 2, std::vector<double>{1.0, -1.0});
  const auto cache = forward(net, x);
  // y = [1 - 2 + 0.5, 3 - 4 - 1] = [-0.5, -2]
  EXPECT_DOUBLE_EQ(cache.output()(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(cache.output()(0, 1), -2.0);
  const auto r = backward(net, cache, cache.output());
  const auto& gw = r.params.weights[0];
  EXPECT_DOUBLE_EQ(gw(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(gw(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(gw(1, 0), -2.0);
  EXPECT_DOUBLE_EQ(gw(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(r.params.biases[0][0], -0.5);
  EXPECT_DOUBLE_EQ(r.params.biases[0][1], -2.0);
  EXPECT_DOUBLE_EQ(r.input_gradient(0, 0), 1 * -0.5 + 3 * -2.0);
  EXPECT_DOUBLE_EQ(r.input_gradient(0, 1), 2 * -0.5 + 4 * -2.0);
}

TEST(Backward, IdentityLayerGradientIsInputScaledOutput) {
  const MultiLayerNet net({identity_layer(2, Activation::linear)});
  const Matrix x(1, 2, std::vector<double>{3.0, -2.0});
  const auto cache = forward(net, x);
  const auto r = backward(net, cache, cache.output());
  // dL/dW_ij = y_i x_j with y = x
  EXPECT_DOUBLE_EQ(r.params.weights[0](0, 0), 9.0);
  EXPECT_DOUBLE_EQ(r.params.weights[0](0, 1), -6.0);
  EXPECT_DOUBLE_EQ(r.params.weights[0](1, 0), -6.0);
  EXPECT_DOUBLE_EQ(r.params.weights[0](1, 1), 4.0);
}

TEST(Backward, ZeroOutputGradientGivesZeroGradients) {
  Rng rng(1);
  const auto net = MultiLayerNet::make({4, 5, 3}, {Activation::tanh}, {Activation::sigmoid}, rng);
  const auto cache = forward(net, random_matrix(6, 4, rng));
  const auto r = backward(net, cache, Matrix(6, 3));
  for (auto v : r.params.views())
    for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(Backward, StaleCacheIsRejected) {
  Rng rng(2);
  auto net = MultiLayerNet::make({3, 4, 2}, {Activation::leaky_relu}, {Activation::linear}, rng);
  const auto cache = forward(net, random_matrix(2, 3, rng));
  net.mutable_layers()[0].bias[0] += 1.0;
  EXPECT_THROW(backward(net, cache, Matrix(2, 2)), std::logic_error);
  const auto other = MultiLayerNet::make({3, 4, 2}, {Activation::leaky_relu}, {Activation::linear}, rng);
  EXPECT_THROW(backward(other, forward(net, random_matrix(2, 3, rng)), Matrix(2, 2)), std::logic_error);
}

TEST(GradientCheck, LinearNetsAreExact) {
  Rng rng(3);
  const auto net = MultiLayerNet::make({5, 7, 6, 3}, {Activation::linear}, {Activation::linear}, rng);
  EXPECT_LT(gradient_check(net, random_matrix(4, 5, rng), half_square), 1e-7);
}

TEST(GradientCheck, ThreeLayerLeakyRelu) {
  Rng rng(4);
  const auto net = MultiLayerNet::make({6, 8, 8, 4}, {Activation::leaky_relu}, {Activation::linear}, rng);
  const auto x = random_matrix(5, 6, rng);
  // keep away from the kink
  const auto cache = forward(net, x);
  for (const auto& pre : cache.pre)
    for (double v : pre.data()) ASSERT_GT(std::abs(v), 1e-3);
  EXPECT_LT(gradient_check(net, x, mixed_loss), 1e-4);
}

class ActivationGradient : public ::testing::TestWithParam<std::tuple<Activation, Activation>> {};

TEST_P(ActivationGradient, BelowTolerance) {
  const auto [hidden, output] = GetParam();
  Rng rng(5);
  const auto net = MultiLayerNet::make({4, 6, 5, 3}, {hidden}, {output}, rng);
  const auto x = random_matrix(3, 4, rng);
  if (hidden == Activation::leaky_relu) {
    const auto cache = forward(net, x);
    for (std::size_t l = 0; l + 1 < net.layer_count(); ++l)
      for (double v : cache.pre[l].data()) ASSERT_GT(std::abs(v), 1e-3);
  }
  EXPECT_LT(gradient_check(net, x, mixed_loss), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(
    AllPairs, ActivationGradient,
    ::testing::Combine(::testing::Values(Activation::linear, Activation::leaky_relu, Activation::tanh,
                                         Activation::sigmoid),
                       ::testing::Values(Activation::linear, Activation::leaky_relu, Activation::tanh,
                                         Activation::sigmoid)),
    [](const auto& info) {
      return to_string(std::get<0>(info.param)) + "_" + to_string(std::get<1>(info.param));
    });

TEST(GradientCheck, DetectsCorruptedGradient) {
  Rng rng(6);
  const auto net = MultiLayerNet::make({3, 4, 2}, {Activation::tanh}, {Activation::linear}, rng);
  const auto x = random_matrix(2, 3, rng);
  auto analytic = analytic_gradients(net, x, mixed_loss);
  analytic.scale(2.0);
  EXPECT_NEAR(max_relative_error(analytic, numerical_gradients(net, x, mixed_loss)), 0.5, 1e-4);
}

TEST(Adam, FirstStepIsLrTimesSign) {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -4.0, 1e-3};
  AdamState s;
  s.lr = 0.01;
  std::span<double> ps[] = {p};
  std::span<const double> gs[] = {g};
  adam_step(ps, gs, s);
  EXPECT_EQ(s.t, 1u);
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-9);
  EXPECT_NEAR(p[2], 0.5 - 0.01, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.0, 0.0};
  AdamState s;
  std::span<double> ps[] = {p};
  std::span<const double> gs[] = {g};
  for (int i = 0; i < 5; ++i) adam_step(ps, gs, s);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], -2.0);
}

TEST(Adam, RejectsNonFiniteGradient) {
  std::vector<double> p{1.0};
  const std::vector<double> g{std::nan("")};
  AdamState s;
  std::span<double> ps[] = {p};
  std::span<const double> gs[] = {g};
  EXPECT_THROW(adam_step(ps, gs, s), DivergenceError);
  EXPECT_EQ(p[0], 1.0);
}

TEST(Adam, RejectsBadHyperparameters) {
  std::vector<double> p{1.0};
  const std::vector<double> g{1.0};
  std::span<double> ps[] = {p};
  std::span<const double> gs[] = {g};
  AdamState s;
  s.beta1 = 1.0;
  EXPECT_THROW(adam_step(ps, gs, s), std::invalid_argument);
  s.beta1 = 0.9;
  s.lr = 0.0;
  EXPECT_THROW(adam_step(ps, gs, s), std::invalid_argument);
}

// Scalar Adam written out independently of adam_step.
double reference_adam_square(int steps, double lr) {
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= steps; ++t) {
    const double g = 2.0 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= lr * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
  }
  return x;
}

TEST(Adam, MinimizesSquare) {
  std::vector<double> x{1.0};
  std::vector<double> g(1);
  AdamState s;
  s.lr = 0.05;
  std::span<double> ps[] = {x};
  std::span<const double> gs[] = {g};
  for (int i = 0; i < 500; ++i) {
    g[0] = 2.0 * x[0];
    adam_step(ps, gs, s);
  }
  EXPECT_LT(std::abs(x[0]), 1e-3);
  EXPECT_NEAR(x[0], reference_adam_square(500, 0.05), 1e-12);
}

TEST(SpectralNorm, Examples) {
  EXPECT_EQ(spectral_normalize(Matrix::identity(3), 20), Matrix::identity(3));
  const Matrix d(2, 2, std::vector<double>{2, 0, 0, 1});
  const auto n = spectral_normalize(d, 20);
  EXPECT_NEAR(n(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(n(1, 1), 0.5, 1e-12);
  EXPECT_EQ(n(0, 1), 0.0);
  const Matrix zero(3, 4);
  EXPECT_EQ(spectral_normalize(zero, 20), zero);
}

// Largest singular value from the eigenvalues of W^T W via Jacobi rotations.
double reference_sigma_max(const Matrix& w) {
  const std::size_t n = w.cols();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t r = 0; r < w.rows(); ++r) a[i * n + j] += w(r, i) * w(r, j);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p * n + q]) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * a[p * n + q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) best = std::max(best, a[i * n + i]);
  return std::sqrt(best);
}

TEST(SpectralNorm, RandomMatricesEndAtMostOne) {
  Rng rng(7);
  std::uniform_int_distribution<std::size_t> dim(1, 12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = random_matrix(dim(rng), dim(rng), rng, 3.0);
    const auto n = spectral_normalize(w, 20);
    EXPECT_LE(reference_sigma_max(n), 1.0 + 1e-3);
    EXPECT_LE(spectral_norm_estimate(w, 20), reference_sigma_max(w) * (1.0 + 1e-12));
  }
}

TEST(Determinism, SameSeedSameParametersAfterTraining) {
  auto run = [] {
    Rng rng(11);
    auto net = MultiLayerNet::make({3, 8, 2}, {Activation::leaky_relu}, {Activation::sigmoid}, rng);
    AdamState s;
    for (int i = 0; i < 50; ++i) {
      const auto x = random_matrix(4, 3, rng);
      const auto cache = forward(net, x);
      Matrix g(4, 2);
      half_square(cache.output(), &g);
      adam_step(net, backward(net, cache, g, false).params, s);
    }
    return net;
  };
  EXPECT_TRUE(run() == run());
}

TEST(Init, XavierBounds) {
  Rng rng(12);
  const auto layer = make_dense_layer(30, 10, {Activation::tanh}, rng);
  const double limit = std::sqrt(6.0 / 40.0);
  for (double w : layer.weights.data()) EXPECT_LE(std::abs(w), limit);
  for (double b : layer.bias) EXPECT_EQ(b, 0.0);
}

TEST(Forward, NonFiniteOutputRaises) {
  DenseLayer layer{Matrix(1, 1, std::vector<double>{1e308}), {0.0}, {Activation::linear}};
  const MultiLayerNet net({layer});
  EXPECT_THROW(predict(net, Matrix(1, 1, std::vector<double>{1e10})), DivergenceError);
}

}  // namespace
}  // namespace profgan::nn

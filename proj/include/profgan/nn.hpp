#pragma once

// Small dense feed-forward network engine: forward/backward passes, Adam,
// spectral normalization and a finite-difference gradient checker.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "profgan/errors.hpp"
#include "profgan/matrix.hpp"

namespace profgan::nn {

using Rng = std::mt19937_64;

enum class Activation { linear, leaky_relu, tanh, sigmoid };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

inline constexpr double kDefaultLeakyAlpha = 0.2;

struct ActivationSpec {
  Activation kind = Activation::linear;
  double alpha = kDefaultLeakyAlpha;  // leaky_relu slope; ignored otherwise

  friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double activate(const ActivationSpec& a, double x) {
  switch (a.kind) {
    case Activation::linear: return x;
    case Activation::leaky_relu: return x > 0.0 ? x : a.alpha * x;
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

/// d activation / d pre, written in terms of the pre-activation and the
/// already computed activation value.
inline double activate_derivative(const ActivationSpec& a, double pre, double post) {
  switch (a.kind) {
    case Activation::linear: return 1.0;
    case Activation::leaky_relu: return pre > 0.0 ? 1.0 : a.alpha;
    case Activation::tanh: return 1.0 - post * post;
    case Activation::sigmoid: return post * (1.0 - post);
  }
  return 1.0;
}

struct DenseLayer {
  Matrix weights;  // out x in
  std::vector<double> bias;
  ActivationSpec activation;

  std::size_t in() const { return weights.cols(); }
  std::size_t out() const { return weights.rows(); }
};

/// Xavier/Glorot uniform weights, zero bias.
inline DenseLayer make_dense_layer(std::size_t in, std::size_t out, ActivationSpec act, Rng& rng) {
  DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0), act};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : layer.weights.data()) w = dist(rng);
  return layer;
}

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  std::vector<std::span<const double>> views() const {
    std::vector<std::span<const double>> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(weights[l].data());
      out.push_back(biases[l]);
    }
    return out;
  }

  std::vector<std::span<double>> mutable_views() {
    std::vector<std::span<double>> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(weights[l].data());
      out.push_back(biases[l]);
    }
    return out;
  }

  Gradients& operator+=(const Gradients& other) {
    if (other.weights.size() != weights.size()) throw DimensionError("Gradients: layer count mismatch");
    auto dst = mutable_views();
    auto src = other.views();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i].size() != src[i].size()) throw DimensionError("Gradients: shape mismatch");
      for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += src[i][j];
    }
    return *this;
  }

  void scale(double factor) {
    for (auto v : mutable_views())
      for (double& x : v) x *= factor;
  }
};

struct ForwardCache {
  std::uint64_t net_id = 0;
  std::uint64_t net_version = 0;
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  std::vector<Matrix> post;    // activation of each layer
  const Matrix& output() const { return post.back(); }
};

struct BackwardResult {
  Gradients params;
  Matrix input_gradient;
};

class MultiLayerNet {
 public:
  MultiLayerNet() : id_(next_id()) {}
  explicit MultiLayerNet(std::vector<DenseLayer> layers) : id_(next_id()), layers_(std::move(layers)) {
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      if (layers_[l].out() != layers_[l + 1].in()) {
        throw DimensionError("MultiLayerNet: layer " + std::to_string(l) + " output " +
                             std::to_string(layers_[l].out()) + " != layer " + std::to_string(l + 1) +
                             " input " + std::to_string(layers_[l + 1].in()));
      }
    }
    for (const auto& layer : layers_) {
      if (layer.bias.size() != layer.out()) throw DimensionError("MultiLayerNet: bias size mismatch");
    }
  }

  MultiLayerNet(const MultiLayerNet& other)
      : id_(next_id()), version_(0), layers_(other.layers_) {}
  MultiLayerNet& operator=(const MultiLayerNet& other) {
    layers_ = other.layers_;
    id_ = next_id();
    version_ = 0;
    return *this;
  }
  MultiLayerNet(MultiLayerNet&&) noexcept = default;
  MultiLayerNet& operator=(MultiLayerNet&&) noexcept = default;

  /// dims = {in, hidden..., out}; hidden layers use `hidden`, the last `output`.
  static MultiLayerNet make(const std::vector<std::size_t>& dims, ActivationSpec hidden,
                            ActivationSpec output, Rng& rng) {
    if (dims.size() < 2) throw DimensionError("MultiLayerNet::make: need at least in and out dims");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      layers.push_back(make_dense_layer(dims[l], dims[l + 1], l + 2 == dims.size() ? output : hidden, rng));
    }
    return MultiLayerNet(std::move(layers));
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in(); }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out(); }
  std::size_t layer_count() const { return layers_.size(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Mutable access invalidates outstanding forward caches.
  std::vector<DenseLayer>& mutable_layers() {
    ++version_;
    return layers_;
  }

  std::vector<std::span<double>> parameter_views() {
    ++version_;
    std::vector<std::span<double>> out;
    for (auto& layer : layers_) {
      out.push_back(layer.weights.data());
      out.push_back(layer.bias);
    }
    return out;
  }

  std::vector<std::span<const double>> parameter_views() const {
    std::vector<std::span<const double>> out;
    for (const auto& layer : layers_) {
      out.push_back(layer.weights.data());
      out.push_back(layer.bias);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
    return n;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& layer : layers_) {
      g.weights.emplace_back(layer.out(), layer.in());
      g.biases.emplace_back(layer.out(), 0.0);
    }
    return g;
  }

  std::uint64_t id() const { return id_; }
  std::uint64_t version() const { return version_; }

  friend bool operator==(const MultiLayerNet& a, const MultiLayerNet& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      const auto& x = a.layers_[l];
      const auto& y = b.layers_[l];
      if (!(x.weights == y.weights) || x.bias != y.bias || !(x.activation == y.activation)) return false;
    }
    return true;
  }

 private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  std::uint64_t id_;
  std::uint64_t version_ = 0;
  std::vector<DenseLayer> layers_;
};

inline ForwardCache forward(const MultiLayerNet& net, const Matrix& batch) {
  if (net.layer_count() == 0) throw DimensionError("forward: empty network");
  if (batch.cols() != net.input_dim()) {
    throw DimensionError("forward: batch width " + std::to_string(batch.cols()) +
                         " != network input " + std::to_string(net.input_dim()));
  }
  ForwardCache cache;
  cache.net_id = net.id();
  cache.net_version = net.version();
  const Matrix* input = &batch;
  for (const auto& layer : net.layers()) {
    cache.inputs.push_back(*input);
    Matrix pre = matmul_transposed(*input, layer.weights);
    Matrix post(pre.rows(), pre.cols());
    for (std::size_t r = 0; r < pre.rows(); ++r) {
      auto prow = pre.row(r);
      auto orow = post.row(r);
      for (std::size_t c = 0; c < prow.size(); ++c) {
        prow[c] += layer.bias[c];
        orow[c] = activate(layer.activation, prow[c]);
      }
    }
    cache.pre.push_back(std::move(pre));
    cache.post.push_back(std::move(post));
    input = &cache.post.back();
  }
  if (!cache.output().all_finite()) throw DivergenceError("forward: non-finite network output");
  return cache;
}

/// Output-only convenience wrapper.
inline Matrix predict(const MultiLayerNet& net, const Matrix& batch) {
  return forward(net, batch).post.back();
}

inline BackwardResult backward(const MultiLayerNet& net, const ForwardCache& cache,
                               const Matrix& output_gradient, bool need_input_gradient = true) {
  if (cache.net_id != net.id() || cache.net_version != net.version() ||
      cache.pre.size() != net.layer_count()) {
    throw std::logic_error("backward: stale or mismatched forward cache");
  }
  const auto& out = cache.output();
  if (output_gradient.rows() != out.rows() || output_gradient.cols() != out.cols()) {
    throw DimensionError("backward: output gradient " + shape_string(output_gradient) +
                         " != output " + shape_string(out));
  }
  BackwardResult result{net.zero_gradients(), {}};
  Matrix grad = output_gradient;
  for (std::size_t li = net.layer_count(); li-- > 0;) {
    const auto& layer = net.layers()[li];
    const auto& pre = cache.pre[li];
    const auto& post = cache.post[li];
    for (std::size_t r = 0; r < grad.rows(); ++r) {
      auto g = grad.row(r);
      const auto p = pre.row(r);
      const auto q = post.row(r);
      for (std::size_t c = 0; c < g.size(); ++c) g[c] *= activate_derivative(layer.activation, p[c], q[c]);
    }
    accumulate_transposed_product(grad, cache.inputs[li], result.params.weights[li]);
    auto& gb = result.params.biases[li];
    for (std::size_t r = 0; r < grad.rows(); ++r) {
      const auto g = grad.row(r);
      for (std::size_t c = 0; c < g.size(); ++c) gb[c] += g[c];
    }
    if (li > 0 || need_input_gradient) grad = matmul(grad, layer.weights);
  }
  if (need_input_gradient) result.input_gradient = std::move(grad);
  return result;
}

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void validate() const {
    if (!(lr > 0.0) || !(epsilon > 0.0) || beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      throw std::invalid_argument("AdamState: invalid hyperparameters");
    }
  }
};

/// Bias-corrected Adam update, in place. All gradients are checked for
/// finiteness before any parameter changes.
inline void adam_step(std::span<const std::span<double>> params,
                      std::span<const std::span<const double>> grads, AdamState& state) {
  state.validate();
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) throw DimensionError("adam_step: tensor shape mismatch");
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw DivergenceError("adam_step: non-finite gradient");
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  } else if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: state does not match parameters");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != params[i].size()) throw DimensionError("adam_step: state does not match parameters");
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double g = grads[i][j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      params[i][j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

inline void adam_step(MultiLayerNet& net, const Gradients& grads, AdamState& state) {
  auto params = net.parameter_views();
  auto g = grads.views();
  adam_step(std::span<const std::span<double>>(params), std::span<const std::span<const double>>(g), state);
}

/// Largest singular value of `w` estimated by power iteration on w^T w.
/// Runs at least `iterations` steps, then continues until the estimate
/// settles (relative change < 1e-12) or 100 x iterations have run.
inline double spectral_norm_estimate(const Matrix& w, int iterations) {
  if (iterations < 1) throw std::invalid_argument("spectral_norm_estimate: iterations must be >= 1");
  if (w.size() == 0) return 0.0;
  // Fixed, non-degenerate start vector so the result is deterministic.
  std::vector<double> v(w.cols());
  Rng rng(0x5eed5eedULL);
  std::normal_distribution<double> normal;
  for (double& x : v) x = normal(rng);
  std::vector<double> u(w.rows());
  double sigma = 0.0;
  const long long cap = 100LL * iterations;
  for (long long it = 0; it < cap; ++it) {
    const double previous = sigma;
    double unorm = 0.0;
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double acc = 0.0;
      const auto row = w.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * v[c];
      u[r] = acc;
      unorm += acc * acc;
    }
    unorm = std::sqrt(unorm);
    if (unorm < 1e-300) return 0.0;
    for (double& x : u) x /= unorm;
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      const auto row = w.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) v[c] += row[c] * u[r];
    }
    double vnorm = 0.0;
    for (double x : v) vnorm += x * x;
    vnorm = std::sqrt(vnorm);
    sigma = vnorm;  // = u^T W v with unit v after normalization
    if (vnorm < 1e-300) return 0.0;
    for (double& x : v) x /= vnorm;
    if (it + 1 >= iterations && std::abs(sigma - previous) <= 1e-12 * sigma) break;
  }
  return sigma;
}

/// Returns w / sigma_max(w); leaves w unchanged when sigma < 1e-12.
inline Matrix spectral_normalize(const Matrix& weights, int iterations) {
  const double sigma = spectral_norm_estimate(weights, iterations);
  if (sigma < 1e-12) return weights;
  Matrix out = weights;
  for (double& x : out.data()) x /= sigma;
  return out;
}

/// Loss callback: returns the scalar loss for a network output and writes
/// d loss / d output into `grad` when it is non-null.
using LossFn = std::function<double(const Matrix& output, Matrix* grad)>;

inline constexpr double kGradientCheckStep = 1e-5;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

inline Gradients analytic_gradients(const MultiLayerNet& net, const Matrix& input, const LossFn& loss) {
  auto cache = forward(net, input);
  Matrix grad(cache.output().rows(), cache.output().cols());
  loss(cache.output(), &grad);
  return backward(net, cache, grad, false).params;
}

/// Central finite differences over every parameter.
inline Gradients numerical_gradients(const MultiLayerNet& net, const Matrix& input, const LossFn& loss,
                                     double h = kGradientCheckStep) {
  MultiLayerNet probe = net;
  Gradients out = net.zero_gradients();
  auto params = probe.parameter_views();
  auto grads = out.mutable_views();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t j = 0; j < params[t].size(); ++j) {
      const double saved = params[t][j];
      params[t][j] = saved + h;
      const double up = loss(predict(probe, input), nullptr);
      params[t][j] = saved - h;
      const double down = loss(predict(probe, input), nullptr);
      params[t][j] = saved;
      grads[t][j] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

inline double max_relative_error(const Gradients& analytic, const Gradients& numeric) {
  const auto a = analytic.views();
  const auto n = numeric.views();
  if (a.size() != n.size()) throw DimensionError("max_relative_error: layout mismatch");
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].size() != n[t].size()) throw DimensionError("max_relative_error: layout mismatch");
    for (std::size_t j = 0; j < a[t].size(); ++j) worst = std::max(worst, relative_error(a[t][j], n[t][j]));
  }
  return worst;
}

/// Max relative error between backprop and central-difference gradients.
inline double gradient_check(const MultiLayerNet& net, const Matrix& input, const LossFn& loss,
                             double h = kGradientCheckStep) {
  return max_relative_error(analytic_gradients(net, input, loss), numerical_gradients(net, input, loss, h));
}

}  // namespace profgan::nn

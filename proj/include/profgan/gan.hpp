#pragma once

// Per-type GANs and the Multi-type GAN (shared conditional generator plus a
// discriminator with an auxiliary type-classification head).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "profgan/core_data.hpp"
#include "profgan/errors.hpp"
#include "profgan/nn.hpp"
#include "profgan/stats.hpp"

namespace profgan::gan {

using nn::Matrix;
using nn::MultiLayerNet;

enum class GanMode { single_type, multi_type };

inline std::string to_string(GanMode m) { return m == GanMode::single_type ? "single_type" : "multi_type"; }

inline GanMode mode_from_string(const std::string& s) {
  if (s == "single_type" || s == "single") return GanMode::single_type;
  if (s == "multi_type" || s == "multi") return GanMode::multi_type;
  throw std::invalid_argument("unknown GAN mode '" + s + "'");
}

struct GanConfig {
  std::size_t latent_dim = 32;
  std::vector<std::size_t> generator_hidden{64, 128};
  std::vector<std::size_t> discriminator_hidden{128, 64};
  double lr_generator = 2e-4;
  double lr_discriminator = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::size_t batch_size = 64;
  std::size_t epochs = 500;
  double label_smoothing = 0.1;
  double lambda_cls = 1.0;
  bool aux_head_gradient = true;  // false: class head never feeds gradients back
  bool spectral_norm = false;
  int spectral_iterations = 20;
  double leaky_alpha = nn::kDefaultLeakyAlpha;
  bool use_month_condition = true;
  bool use_starting_point_condition = true;
  double duty_threshold = kDefaultDutyThreshold;
  double divergence_limit = 1e3;
  std::uint64_t seed = 0;

  void validate() const {
    if (latent_dim < 1) throw std::invalid_argument("GanConfig: latent_dim must be >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 0.5) {
      throw std::invalid_argument("GanConfig: label_smoothing must be in [0, 0.5)");
    }
    if (lambda_cls < 0.0) throw std::invalid_argument("GanConfig: lambda_cls must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("GanConfig: batch_size must be >= 1");
    if (!(lr_generator > 0.0) || !(lr_discriminator > 0.0)) {
      throw std::invalid_argument("GanConfig: learning rates must be positive");
    }
    if (discriminator_hidden.empty()) throw std::invalid_argument("GanConfig: discriminator needs a hidden layer");
    if (spectral_iterations < 1) throw std::invalid_argument("GanConfig: spectral_iterations must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const GanConfig& c) {
  j = nlohmann::json{{"latent_dim", c.latent_dim},
                     {"generator_hidden", c.generator_hidden},
                     {"discriminator_hidden", c.discriminator_hidden},
                     {"lr_generator", c.lr_generator},
                     {"lr_discriminator", c.lr_discriminator},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"label_smoothing", c.label_smoothing},
                     {"lambda_cls", c.lambda_cls},
                     {"aux_head_gradient", c.aux_head_gradient},
                     {"spectral_norm", c.spectral_norm},
                     {"spectral_iterations", c.spectral_iterations},
                     {"leaky_alpha", c.leaky_alpha},
                     {"use_month_condition", c.use_month_condition},
                     {"use_starting_point_condition", c.use_starting_point_condition},
                     {"duty_threshold", c.duty_threshold},
                     {"divergence_limit", c.divergence_limit},
                     {"seed", c.seed}};
}

/// Missing keys keep their defaults, so partial config files are fine.
inline void from_json(const nlohmann::json& j, GanConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("latent_dim", c.latent_dim);
  get("generator_hidden", c.generator_hidden);
  get("discriminator_hidden", c.discriminator_hidden);
  get("lr_generator", c.lr_generator);
  get("lr_discriminator", c.lr_discriminator);
  get("adam_beta1", c.adam_beta1);
  get("adam_beta2", c.adam_beta2);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("label_smoothing", c.label_smoothing);
  get("lambda_cls", c.lambda_cls);
  get("aux_head_gradient", c.aux_head_gradient);
  get("spectral_norm", c.spectral_norm);
  get("spectral_iterations", c.spectral_iterations);
  get("leaky_alpha", c.leaky_alpha);
  get("use_month_condition", c.use_month_condition);
  get("use_starting_point_condition", c.use_starting_point_condition);
  get("duty_threshold", c.duty_threshold);
  get("divergence_limit", c.divergence_limit);
  get("seed", c.seed);
}

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kProbabilityClamp = 1e-7;

inline double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

/// Mean of -[(1 - s) log d_real + log(1 - d_fake)].
inline double discriminator_loss(std::span<const double> d_real, std::span<const double> d_fake,
                                 double smoothing) {
  if (d_real.empty() || d_real.size() != d_fake.size()) {
    throw DimensionError("discriminator_loss: batches must be non-empty and equal-sized");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    total -= (1.0 - smoothing) * std::log(clamp_probability(d_real[i])) +
             std::log(1.0 - clamp_probability(d_fake[i]));
  }
  return total / static_cast<double>(d_real.size());
}

/// Non-saturating generator objective: mean of -log d_fake.
inline double generator_loss(std::span<const double> d_fake) {
  if (d_fake.empty()) throw DimensionError("generator_loss: empty batch");
  double total = 0.0;
  for (double p : d_fake) total -= std::log(clamp_probability(p));
  return total / static_cast<double>(d_fake.size());
}

inline double cross_entropy(std::span<const double> class_probs, std::size_t true_type) {
  if (true_type >= class_probs.size()) {
    throw std::out_of_range("cross_entropy: type index " + std::to_string(true_type) + " outside " +
                            std::to_string(class_probs.size()) + " classes");
  }
  return -std::log(clamp_probability(class_probs[true_type]));
}

/// Adversarial term plus lambda_cls times the auxiliary classification
/// cross-entropy. With lambda_cls == 0 the adversarial value is returned as is.
inline double multi_type_loss(double adversarial, std::span<const double> class_probs, std::size_t true_type,
                              double lambda_cls) {
  if (lambda_cls < 0.0) throw std::invalid_argument("multi_type_loss: lambda_cls must be >= 0");
  const double aux = cross_entropy(class_probs, true_type);
  if (lambda_cls == 0.0) return adversarial;
  return adversarial + lambda_cls * aux;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& x : out) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : out) x /= sum;
  return out;
}

// ---------------------------------------------------------------------------
// Conditioning layout

struct ConditionLayout {
  std::size_t type_count = 1;
  bool month = true;
  bool starting_point = true;

  std::size_t generator_dim() const { return type_count + (month ? 12 : 0) + (starting_point ? 1 : 0); }
  /// The multi-type discriminator does not see the type; its class head predicts it.
  std::size_t discriminator_dim(GanMode mode) const {
    return (mode == GanMode::single_type ? type_count : 0) + (month ? 12 : 0) + (starting_point ? 1 : 0);
  }
};

inline void encode_condition(const ConditionVector& c, const ConditionLayout& layout, bool include_type,
                             std::span<double> out) {
  std::size_t k = 0;
  if (include_type) {
    if (c.type_index >= layout.type_count) {
      throw DimensionError("condition type index " + std::to_string(c.type_index) + " outside registry of " +
                           std::to_string(layout.type_count));
    }
    for (std::size_t t = 0; t < layout.type_count; ++t) out[k++] = t == c.type_index ? 1.0 : 0.0;
  }
  if (layout.month) {
    if (c.month < 1 || c.month > 12) throw DimensionError("condition month outside 1..12");
    for (int m = 1; m <= 12; ++m) out[k++] = m == c.month ? 1.0 : 0.0;
  }
  if (layout.starting_point) out[k++] = c.starting_point;
}

// ---------------------------------------------------------------------------
// Model

/// Historical statistics kept with a model so synthesis needs no other input.
/// All values are in capacity-normalized units.
struct TypeStats {
  std::array<double, 12> month_mean{};
  std::vector<double> ramp_quantiles;  // 1001 points, percentiles 0, 0.1, ..., 100
  std::vector<double> start_points;    // hour-0 values of each historical Jan 1
  double duty_threshold = kDefaultDutyThreshold;

  double ramp_limit(double percentile) const {
    if (ramp_quantiles.size() < 2) throw DataError("TypeStats: no ramp statistics");
    return stats::percentile_sorted(ramp_quantiles, percentile);
  }
};

inline constexpr std::size_t kRampQuantilePoints = 1001;

struct Discriminator {
  MultiLayerNet trunk;
  MultiLayerNet adversarial_head;
  std::optional<MultiLayerNet> class_head;  // multi-type only
};

struct EpochLoss {
  double discriminator = 0.0;
  double generator = 0.0;
  double classification = 0.0;  // mean aux cross-entropy on real samples (multi-type)
};

struct TrainedGanModel {
  GanMode mode = GanMode::single_type;
  GanConfig config;
  TypeRegistry registry;
  ConditionLayout layout;
  bool has_duty_output = false;
  MultiLayerNet generator;
  Discriminator discriminator;
  std::vector<TypeStats> type_stats;  // by registry index
  std::vector<EpochLoss> history;

  std::size_t shape_width() const { return kDayHours + (has_duty_output ? 1 : 0); }

  std::size_t type_index(const std::string& label) const { return registry.at(label).index; }
};

namespace detail {

inline std::vector<TypeStats> compute_type_stats(const TrainingSet& set, const TypeRegistry& registry,
                                                 std::span<const std::size_t> type_of_sample, double duty_threshold) {
  std::vector<TypeStats> out(registry.size());
  std::vector<std::array<double, 12>> sums(registry.size()), counts(registry.size());
  std::vector<std::vector<double>> ramps(registry.size());
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto& s = set.samples[i];
    const auto t = type_of_sample[i];
    const auto m = static_cast<std::size_t>(s.condition.month - 1);
    for (double v : s.target_shape) sums[t][m] += v;
    counts[t][m] += static_cast<double>(kDayHours);
    for (std::size_t h = 1; h < kDayHours; ++h) ramps[t].push_back(std::abs(s.target_shape[h] - s.target_shape[h - 1]));
    if (s.day_of_year == 0) {
      out[t].start_points.push_back(s.target_shape[0]);
    } else {
      ramps[t].push_back(std::abs(s.target_shape[0] - s.condition.starting_point));
    }
  }
  for (std::size_t t = 0; t < registry.size(); ++t) {
    for (std::size_t m = 0; m < 12; ++m) out[t].month_mean[m] = counts[t][m] > 0 ? sums[t][m] / counts[t][m] : 0.0;
    std::sort(ramps[t].begin(), ramps[t].end());
    if (!ramps[t].empty()) {
      for (std::size_t q = 0; q < kRampQuantilePoints; ++q) {
        out[t].ramp_quantiles.push_back(
            stats::percentile_sorted(ramps[t], 100.0 * static_cast<double>(q) / (kRampQuantilePoints - 1)));
      }
    }
    out[t].duty_threshold = duty_threshold;
  }
  return out;
}

inline MultiLayerNet make_net(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                              nn::ActivationSpec hidden_act, nn::ActivationSpec out_act, nn::Rng& rng) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return MultiLayerNet::make(dims, hidden_act, out_act, rng);
}

/// Keeps the n = round(24 * duty) largest hours; ties keep the earlier hour.
inline std::array<bool, kDayHours> duty_keep_mask(std::span<const double> shape, double duty) {
  const auto n = static_cast<std::size_t>(std::lround(std::clamp(duty, 0.0, 1.0) * kDayHours));
  std::array<std::size_t, kDayHours> order{};
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return shape[a] > shape[b]; });
  std::array<bool, kDayHours> keep{};
  for (std::size_t i = 0; i < n; ++i) keep[order[i]] = true;
  return keep;
}

}  // namespace detail

/// Builds an untrained model (architecture, initial weights, statistics).
inline TrainedGanModel initialize_model(const TrainingSet& data, const GanConfig& config, GanMode mode) {
  config.validate();
  if (data.samples.empty()) throw DataError("train: empty dataset");
  TrainedGanModel model;
  model.mode = mode;
  model.config = config;

  std::vector<std::size_t> type_of_sample(data.samples.size());
  if (mode == GanMode::single_type) {
    const auto t0 = data.samples.front().condition.type_index;
    for (const auto& s : data.samples) {
      if (s.condition.type_index != t0) throw DataError("single_type training requires samples of one type");
    }
    const auto& type = data.registry.at(t0);
    model.registry.add(type.label, type.intermittent_dispatch);
  } else {
    std::vector<bool> seen(data.registry.size(), false);
    for (const auto& s : data.samples) seen.at(s.condition.type_index) = true;
    if (std::count(seen.begin(), seen.end(), true) < 2) {
      throw DataError("multi-type requires >= 2 types");
    }
    for (const auto& t : data.registry.types()) model.registry.add(t.label, t.intermittent_dispatch);
    for (std::size_t i = 0; i < data.samples.size(); ++i) type_of_sample[i] = data.samples[i].condition.type_index;
  }
  model.layout = {model.registry.size(), config.use_month_condition, config.use_starting_point_condition};
  model.has_duty_output = model.registry.any_intermittent();
  model.type_stats = detail::compute_type_stats(data, model.registry, type_of_sample, config.duty_threshold);

  nn::Rng rng(config.seed);
  const nn::ActivationSpec leaky{nn::Activation::leaky_relu, config.leaky_alpha};
  model.generator = detail::make_net(config.latent_dim + model.layout.generator_dim(), config.generator_hidden,
                                     model.shape_width(), leaky, {nn::Activation::sigmoid}, rng);
  const std::size_t d_in = model.shape_width() + model.layout.discriminator_dim(mode);
  std::vector<std::size_t> trunk_hidden(config.discriminator_hidden.begin(), config.discriminator_hidden.end() - 1);
  model.discriminator.trunk =
      detail::make_net(d_in, trunk_hidden, config.discriminator_hidden.back(), leaky, leaky, rng);
  model.discriminator.adversarial_head =
      detail::make_net(config.discriminator_hidden.back(), {}, 1, leaky, {nn::Activation::linear}, rng);
  if (mode == GanMode::multi_type) {
    model.discriminator.class_head = detail::make_net(config.discriminator_hidden.back(), {}, model.registry.size(),
                                                      leaky, {nn::Activation::linear}, rng);
  }
  return model;
}

struct SampleOutput {
  DailyShape shape{};
  std::optional<double> duty;
};

/// Generator input rows: [z | encoded condition].
inline Matrix generator_input(const TrainedGanModel& model, std::span<const ConditionVector> conditions,
                              const Matrix& z) {
  if (z.rows() != conditions.size() || z.cols() != model.config.latent_dim) {
    throw DimensionError("generator_input: latent batch " + nn::shape_string(z) + " does not match " +
                         std::to_string(conditions.size()) + " conditions of latent dim " +
                         std::to_string(model.config.latent_dim));
  }
  const std::size_t cdim = model.layout.generator_dim();
  Matrix in(z.rows(), model.config.latent_dim + cdim);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (conditions[r].type_count != model.registry.size()) {
      throw DimensionError("condition built for " + std::to_string(conditions[r].type_count) +
                           " types, model has " + std::to_string(model.registry.size()));
    }
    auto row = in.row(r);
    std::copy(z.row(r).begin(), z.row(r).end(), row.begin());
    encode_condition(conditions[r], model.layout, true, row.subspan(model.config.latent_dim));
  }
  return in;
}

inline std::vector<SampleOutput> sample_batch(const TrainedGanModel& model, std::span<const ConditionVector> conditions,
                                              const Matrix& z) {
  const Matrix out = nn::predict(model.generator, generator_input(model, conditions, z));
  std::vector<SampleOutput> samples(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    std::copy_n(out.row(r).begin(), kDayHours, samples[r].shape.begin());
    if (model.has_duty_output && model.registry.at(conditions[r].type_index).intermittent_dispatch) {
      samples[r].duty = out(r, kDayHours);
    }
  }
  return samples;
}

/// Pure function of (parameters, condition, z).
inline SampleOutput sample(const TrainedGanModel& model, const ConditionVector& condition, std::span<const double> z) {
  if (z.size() != model.config.latent_dim) {
    throw DimensionError("sample: latent length " + std::to_string(z.size()) + " != " +
                         std::to_string(model.config.latent_dim));
  }
  Matrix zm(1, z.size(), std::vector<double>(z.begin(), z.end()));
  return sample_batch(model, std::span<const ConditionVector>(&condition, 1), zm).front();
}

inline Matrix draw_latent(std::size_t rows, std::size_t dim, nn::Rng& rng) {
  Matrix z(rows, dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : z.data()) v = normal(rng);
  return z;
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

struct DiscriminatorPass {
  nn::ForwardCache trunk, adv, cls;
  bool has_cls = false;
};

inline DiscriminatorPass discriminate(const Discriminator& d, const Matrix& input) {
  DiscriminatorPass pass;
  pass.trunk = nn::forward(d.trunk, input);
  pass.adv = nn::forward(d.adversarial_head, pass.trunk.output());
  if (d.class_head) {
    pass.cls = nn::forward(*d.class_head, pass.trunk.output());
    pass.has_cls = true;
  }
  return pass;
}

struct ClassTerms {
  double mean_ce = 0.0;
  Matrix logit_grad;  // lambda * (p - y) / B
};

inline ClassTerms class_terms(const Matrix& logits, std::span<const std::size_t> labels, double lambda) {
  ClassTerms out{0.0, Matrix(logits.rows(), logits.cols())};
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = softmax(logits.row(r));
    out.mean_ce += cross_entropy(p, labels[r]) * inv_b;
    for (std::size_t c = 0; c < p.size(); ++c) {
      out.logit_grad(r, c) = lambda * (p[c] - (c == labels[r] ? 1.0 : 0.0)) * inv_b;
    }
  }
  return out;
}

struct DiscriminatorOptimizer {
  nn::AdamState trunk, adv, cls;
};

inline void project_spectral(MultiLayerNet& net, int iterations) {
  for (auto& layer : net.mutable_layers()) layer.weights = nn::spectral_normalize(layer.weights, iterations);
}

inline void check_loss(double value, const char* what, std::size_t epoch, std::size_t batch, double limit) {
  if (!std::isfinite(value) || value > limit) {
    std::ostringstream msg;
    msg << "training diverged: " << what << " loss " << value << " at epoch " << epoch << ", batch " << batch
        << " (limit " << limit << ")";
    throw DivergenceError(msg.str());
  }
}

}  // namespace detail

/// Alternating updates, one discriminator step then one generator step per
/// batch. Deterministic for a fixed config.seed.
inline TrainedGanModel train(const TrainingSet& data, const GanConfig& config, GanMode mode) {
  TrainedGanModel model = initialize_model(data, config, mode);
  if (config.epochs == 0) return model;

  const std::size_t n = data.samples.size();
  const std::size_t width = model.shape_width();
  const std::size_t d_cond = model.layout.discriminator_dim(mode);
  const bool multi = mode == GanMode::multi_type;
  const double s = config.label_smoothing;
  const double lambda = config.lambda_cls;

  // Per-sample tensors in model conditioning space.
  std::vector<ConditionVector> conditions(n);
  std::vector<std::size_t> labels(n);
  std::vector<bool> intermittent(n);
  for (std::size_t i = 0; i < n; ++i) {
    conditions[i] = data.samples[i].condition;
    if (!multi) {
      conditions[i].type_index = 0;
      conditions[i].type_count = 1;
    }
    labels[i] = conditions[i].type_index;
    intermittent[i] = model.registry.at(labels[i]).intermittent_dispatch;
  }

  nn::Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  nn::AdamState g_opt;
  g_opt.lr = config.lr_generator;
  g_opt.beta1 = config.adam_beta1;
  g_opt.beta2 = config.adam_beta2;
  nn::AdamState d_proto = g_opt;
  d_proto.lr = config.lr_discriminator;
  detail::DiscriminatorOptimizer d_opt{d_proto, d_proto, d_proto};

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss sums;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, n - start);
      const double inv_b = 1.0 / static_cast<double>(b);
      std::vector<ConditionVector> bc(b);
      std::vector<std::size_t> bl(b);
      Matrix real(b, width + d_cond);
      Matrix cond(b, d_cond);
      for (std::size_t r = 0; r < b; ++r) {
        const auto idx = order[start + r];
        const auto& sample = data.samples[idx];
        bc[r] = conditions[idx];
        bl[r] = labels[idx];
        auto row = real.row(r);
        std::copy(sample.target_shape.begin(), sample.target_shape.end(), row.begin());
        if (model.has_duty_output) row[kDayHours] = sample.target_duty.value_or(1.0);
        encode_condition(bc[r], model.layout, !multi, cond.row(r));
        std::copy(cond.row(r).begin(), cond.row(r).end(), row.begin() + static_cast<std::ptrdiff_t>(width));
      }

      // Generator forward; fake samples share the real batch's conditions.
      const Matrix z = draw_latent(b, config.latent_dim, rng);
      const auto g_cache = nn::forward(model.generator, generator_input(model, bc, z));
      const Matrix& g_out = g_cache.output();
      Matrix fake(b, width + d_cond);
      Matrix route(b, width, 1.0);  // d fake / d generator output (0/1)
      for (std::size_t r = 0; r < b; ++r) {
        auto row = fake.row(r);
        const auto src = g_out.row(r);
        std::copy(src.begin(), src.end(), row.begin());
        if (model.has_duty_output && !intermittent[order[start + r]]) {
          row[kDayHours] = 1.0;
          route(r, kDayHours) = 0.0;
        }
        std::copy(cond.row(r).begin(), cond.row(r).end(), row.begin() + static_cast<std::ptrdiff_t>(width));
      }

      // Discriminator step.
      {
        auto& d = model.discriminator;
        const auto pr = detail::discriminate(d, real);
        const auto pf = detail::discriminate(d, fake);
        std::vector<double> dr(b), df(b);
        Matrix ga_r(b, 1), ga_f(b, 1);
        for (std::size_t r = 0; r < b; ++r) {
          dr[r] = nn::sigmoid(pr.adv.output()(r, 0));
          df[r] = nn::sigmoid(pf.adv.output()(r, 0));
          ga_r(r, 0) = -(1.0 - s) * (1.0 - dr[r]) * inv_b;
          ga_f(r, 0) = df[r] * inv_b;
        }
        double loss = discriminator_loss(dr, df, s);
        auto br_adv = nn::backward(d.adversarial_head, pr.adv, ga_r);
        auto bf_adv = nn::backward(d.adversarial_head, pf.adv, ga_f);
        Matrix h_grad_r = br_adv.input_gradient;
        Matrix h_grad_f = bf_adv.input_gradient;
        nn::Gradients adv_grads = br_adv.params;
        adv_grads += bf_adv.params;

        std::optional<nn::Gradients> cls_grads;
        if (multi) {
          const auto cr = detail::class_terms(pr.cls.output(), bl, lambda);
          const auto cf = detail::class_terms(pf.cls.output(), bl, lambda);
          loss += lambda * (cr.mean_ce + cf.mean_ce);
          sums.classification += cr.mean_ce;
          if (config.aux_head_gradient) {
            auto brc = nn::backward(*d.class_head, pr.cls, cr.logit_grad);
            auto bfc = nn::backward(*d.class_head, pf.cls, cf.logit_grad);
            cls_grads = brc.params;
            *cls_grads += bfc.params;
            for (std::size_t i = 0; i < h_grad_r.size(); ++i) {
              h_grad_r.data()[i] += brc.input_gradient.data()[i];
              h_grad_f.data()[i] += bfc.input_gradient.data()[i];
            }
          }
        }
        detail::check_loss(loss, "discriminator", epoch, batches, config.divergence_limit);
        auto trunk_grads = nn::backward(d.trunk, pr.trunk, h_grad_r, false).params;
        trunk_grads += nn::backward(d.trunk, pf.trunk, h_grad_f, false).params;

        nn::adam_step(d.trunk, trunk_grads, d_opt.trunk);
        nn::adam_step(d.adversarial_head, adv_grads, d_opt.adv);
        if (cls_grads) nn::adam_step(*d.class_head, *cls_grads, d_opt.cls);
        if (config.spectral_norm) {
          detail::project_spectral(d.trunk, config.spectral_iterations);
          detail::project_spectral(d.adversarial_head, config.spectral_iterations);
        }
        sums.discriminator += loss;
      }

      // Generator step against the updated discriminator.
      {
        const auto& d = model.discriminator;
        const auto pf = detail::discriminate(d, fake);
        std::vector<double> df(b);
        Matrix ga(b, 1);
        for (std::size_t r = 0; r < b; ++r) {
          df[r] = nn::sigmoid(pf.adv.output()(r, 0));
          ga(r, 0) = -(1.0 - df[r]) * inv_b;
        }
        double loss = generator_loss(df);
        Matrix h_grad = nn::backward(d.adversarial_head, pf.adv, ga).input_gradient;
        if (multi) {
          const auto cf = detail::class_terms(pf.cls.output(), bl, lambda);
          loss += lambda * cf.mean_ce;
          if (config.aux_head_gradient) {
            const auto bc_grad = nn::backward(*d.class_head, pf.cls, cf.logit_grad).input_gradient;
            for (std::size_t i = 0; i < h_grad.size(); ++i) h_grad.data()[i] += bc_grad.data()[i];
          }
        }
        detail::check_loss(loss, "generator", epoch, batches, config.divergence_limit);
        const Matrix x_grad = nn::backward(d.trunk, pf.trunk, h_grad).input_gradient;
        Matrix out_grad(b, width);
        for (std::size_t r = 0; r < b; ++r) {
          for (std::size_t c = 0; c < width; ++c) out_grad(r, c) = x_grad(r, c) * route(r, c);
        }
        const auto g_grads = nn::backward(model.generator, g_cache, out_grad, false).params;
        nn::adam_step(model.generator, g_grads, g_opt);
        sums.generator += loss;
      }
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    model.history.push_back({sums.discriminator * inv, sums.generator * inv, sums.classification * inv});
  }
  return model;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointSchemaVersion = 1;

namespace detail {

inline std::string encode_doubles(std::span<const double> xs) {
  std::string out;
  out.reserve(xs.size() * 24);
  char buf[40];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", xs[i]);
    if (i) out.push_back(' ');
    out += buf;
  }
  return out;
}

inline std::vector<double> decode_doubles(const std::string& text, std::size_t expected, const std::string& what) {
  std::vector<double> out;
  out.reserve(expected);
  const char* p = text.c_str();
  while (*p) {
    while (*p == ' ') ++p;
    if (!*p) break;
    char* end = nullptr;
    const double v = std::strtod(p, &end);
    if (end == p) throw CorruptCheckpointError(what + ": unparsable number");
    out.push_back(v);
    p = end;
  }
  if (out.size() != expected) {
    throw CorruptCheckpointError(what + ": expected " + std::to_string(expected) + " values, found " +
                                 std::to_string(out.size()));
  }
  return out;
}

inline nlohmann::json net_to_json(const MultiLayerNet& net) {
  auto layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"in", l.in()},
                      {"out", l.out()},
                      {"activation", nn::to_string(l.activation.kind)},
                      {"alpha", encode_doubles(std::span<const double>(&l.activation.alpha, 1))},
                      {"weights", encode_doubles(l.weights.data())},
                      {"bias", encode_doubles(l.bias)}});
  }
  return {{"layers", layers}};
}

inline MultiLayerNet net_from_json(const nlohmann::json& j, const std::string& what) {
  std::vector<nn::DenseLayer> layers;
  for (const auto& lj : j.at("layers")) {
    const auto in = lj.at("in").get<std::size_t>();
    const auto out = lj.at("out").get<std::size_t>();
    nn::ActivationSpec act{nn::activation_from_string(lj.at("activation").get<std::string>()),
                           decode_doubles(lj.at("alpha").get<std::string>(), 1, what)[0]};
    layers.push_back({Matrix(out, in, decode_doubles(lj.at("weights").get<std::string>(), in * out, what)),
                      decode_doubles(lj.at("bias").get<std::string>(), out, what), act});
  }
  if (layers.empty()) throw CorruptCheckpointError(what + ": no layers");
  return MultiLayerNet(std::move(layers));
}

}  // namespace detail

inline nlohmann::json model_to_json(const TrainedGanModel& m) {
  nlohmann::json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["mode"] = to_string(m.mode);
  j["config"] = m.config;
  auto types = nlohmann::json::array();
  for (const auto& t : m.registry.types()) types.push_back({{"label", t.label}, {"intermittent", t.intermittent_dispatch}});
  j["type_registry"] = types;
  j["has_duty_output"] = m.has_duty_output;
  j["generator"] = detail::net_to_json(m.generator);
  j["discriminator"] = {{"trunk", detail::net_to_json(m.discriminator.trunk)},
                        {"adversarial_head", detail::net_to_json(m.discriminator.adversarial_head)},
                        {"class_head", m.discriminator.class_head ? detail::net_to_json(*m.discriminator.class_head)
                                                                  : nlohmann::json(nullptr)}};
  auto stats = nlohmann::json::array();
  for (const auto& s : m.type_stats) {
    stats.push_back({{"month_mean", detail::encode_doubles(s.month_mean)},
                     {"ramp_quantiles", detail::encode_doubles(s.ramp_quantiles)},
                     {"start_points", detail::encode_doubles(s.start_points)},
                     {"duty_threshold", detail::encode_doubles(std::span<const double>(&s.duty_threshold, 1))}});
  }
  j["normalization"] = {{"basis", "installed_capacity"}, {"types", stats}};
  auto hist = nlohmann::json::array();
  for (const auto& h : m.history) {
    hist.push_back(detail::encode_doubles(std::array<double, 3>{h.discriminator, h.generator, h.classification}));
  }
  j["loss_history"] = hist;
  return j;
}

inline TrainedGanModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema_version")) throw CorruptCheckpointError("missing schema_version");
  const auto version = j.at("schema_version");
  if (!version.is_number_integer() || version.get<int>() != kCheckpointSchemaVersion) {
    throw CheckpointVersionError("schema_version " + version.dump() + ", expected " +
                                 std::to_string(kCheckpointSchemaVersion));
  }
  try {
    TrainedGanModel m;
    m.mode = mode_from_string(j.at("mode").get<std::string>());
    m.config = j.at("config").get<GanConfig>();
    for (const auto& t : j.at("type_registry")) m.registry.add(t.at("label").get<std::string>(), t.at("intermittent").get<bool>());
    m.layout = {m.registry.size(), m.config.use_month_condition, m.config.use_starting_point_condition};
    m.has_duty_output = j.at("has_duty_output").get<bool>();
    m.generator = detail::net_from_json(j.at("generator"), "generator");
    const auto& dj = j.at("discriminator");
    m.discriminator.trunk = detail::net_from_json(dj.at("trunk"), "discriminator trunk");
    m.discriminator.adversarial_head = detail::net_from_json(dj.at("adversarial_head"), "adversarial head");
    if (!dj.at("class_head").is_null()) m.discriminator.class_head = detail::net_from_json(dj.at("class_head"), "class head");
    for (const auto& sj : j.at("normalization").at("types")) {
      TypeStats s;
      const auto mm = detail::decode_doubles(sj.at("month_mean").get<std::string>(), 12, "month_mean");
      std::copy(mm.begin(), mm.end(), s.month_mean.begin());
      s.ramp_quantiles = detail::decode_doubles(sj.at("ramp_quantiles").get<std::string>(), kRampQuantilePoints, "ramps");
      const auto sp_text = sj.at("start_points").get<std::string>();
      const auto sp_count = static_cast<std::size_t>(
          std::count_if(sp_text.begin(), sp_text.end(), [](char c) { return c == ' '; }) + (sp_text.empty() ? 0 : 1));
      s.start_points = detail::decode_doubles(sp_text, sp_count, "start_points");
      s.duty_threshold = detail::decode_doubles(sj.at("duty_threshold").get<std::string>(), 1, "duty_threshold")[0];
      m.type_stats.push_back(std::move(s));
    }
    for (const auto& h : j.at("loss_history")) {
      const auto v = detail::decode_doubles(h.get<std::string>(), 3, "loss_history");
      m.history.push_back({v[0], v[1], v[2]});
    }
    if (m.type_stats.size() != m.registry.size()) throw CorruptCheckpointError("statistics do not match type registry");
    if (m.generator.input_dim() != m.config.latent_dim + m.layout.generator_dim() ||
        m.generator.output_dim() != m.shape_width()) {
      throw CorruptCheckpointError("generator dimensions do not match config");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError(e.what());
  } catch (const std::invalid_argument& e) {
    throw CorruptCheckpointError(e.what());
  } catch (const DataError& e) {
    throw CorruptCheckpointError(e.what());
  }
}

inline void save_model(const TrainedGanModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  out << model_to_json(model).dump(1) << '\n';
  if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

inline TrainedGanModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace profgan::gan

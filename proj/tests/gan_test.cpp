#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "profgan/gan.hpp"
#include "test_util.hpp"

namespace profgan::gan {
namespace {

using testing::site;
using synthetic::Family;

const double kLn2 = std::log(2.0);

TrainingSet family_set(std::vector<synthetic::SiteSpec> sites, int years = 1, std::uint64_t seed = 1) {
  const auto data = synthetic::generate({std::move(sites)}, 2021, years, seed);
  return build_training_set(data.profiles, data.metas);
}

GanConfig quick_config(std::size_t epochs, std::uint64_t seed = 3) {
  GanConfig c;
  c.epochs = epochs;
  c.seed = seed;
  return c;
}

TEST(Losses, DiscriminatorUnitValues) {
  const std::vector<double> half{0.5, 0.5, 0.5};
  EXPECT_NEAR(discriminator_loss(half, half, 0.0), 2.0 * kLn2, 1e-12);
  EXPECT_NEAR(discriminator_loss(half, half, 0.1), 1.9 * kLn2, 1e-12);
  const std::vector<double> one{1.0}, zero{0.0};
  EXPECT_LT(discriminator_loss(one, zero, 0.0), 1e-6);
}

TEST(Losses, GeneratorUnitValues) {
  const std::vector<double> half{0.5, 0.5};
  EXPECT_NEAR(generator_loss(half), kLn2, 1e-12);
  const std::vector<double> one{1.0};
  EXPECT_LT(generator_loss(one), 1e-6);
  const std::vector<double> inv_e{std::exp(-1.0)};
  EXPECT_NEAR(generator_loss(inv_e), 1.0, 1e-12);
}

TEST(Losses, ClampedAtZeroAndOne) {
  const std::vector<double> zero{0.0}, one{1.0};
  EXPECT_TRUE(std::isfinite(discriminator_loss(zero, one, 0.0)));
  EXPECT_NEAR(generator_loss(zero), -std::log(kProbabilityClamp), 1e-9);
}

TEST(Losses, MultiTypeLoss) {
  const std::vector<double> uniform(4, 0.25);
  EXPECT_NEAR(multi_type_loss(0.7, uniform, 2, 1.0), 0.7 + std::log(4.0), 1e-12);
  const std::vector<double> sure{0.0, 1.0, 0.0};
  EXPECT_NEAR(multi_type_loss(0.7, sure, 1, 1.0), 0.7, 1e-6);
  // exactly the adversarial term
  const double adv = 1.2345678901234567;
  EXPECT_EQ(multi_type_loss(adv, uniform, 3, 0.0), adv);
  EXPECT_THROW(multi_type_loss(adv, uniform, 4, 1.0), std::out_of_range);
  EXPECT_THROW(multi_type_loss(adv, uniform, 0, -1.0), std::invalid_argument);
}

TEST(Losses, SoftmaxIsSimplex) {
  const std::vector<double> logits{1000.0, -3.0, 2.0};
  const auto p = softmax(logits);
  double sum = 0.0;
  for (double x : p) {
    EXPECT_GE(x, 0.0);
    sum += x;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Config, Validation) {
  GanConfig c;
  EXPECT_NO_THROW(c.validate());
  c.latent_dim = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.label_smoothing = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lambda_cls = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Config, JsonRoundTripAndPartialDefaults) {
  GanConfig c;
  c.latent_dim = 8;
  c.generator_hidden = {16};
  c.lambda_cls = 0.25;
  c.seed = 99;
  const nlohmann::json j = c;
  const auto back = j.get<GanConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  const auto partial = nlohmann::json{{"epochs", 7}}.get<GanConfig>();
  EXPECT_EQ(partial.epochs, 7u);
  EXPECT_EQ(partial.latent_dim, GanConfig{}.latent_dim);
}

TEST(Architecture, DimensionsFollowMode) {
  const auto single = family_set({site("pk", "peaker", Family::duty, 0.05)});
  const auto m1 = initialize_model(single, quick_config(0), GanMode::single_type);
  EXPECT_TRUE(m1.has_duty_output);
  EXPECT_EQ(m1.generator.input_dim(), 32u + 1u + 12u + 1u);
  EXPECT_EQ(m1.generator.output_dim(), 25u);
  EXPECT_EQ(m1.discriminator.trunk.input_dim(), 25u + 1u + 12u + 1u);
  EXPECT_FALSE(m1.discriminator.class_head.has_value());

  const auto multi = family_set({site("pv", "solar", Family::solar, 0.2), site("wf", "wind", Family::wind, 0.3)});
  const auto m2 = initialize_model(multi, quick_config(0), GanMode::multi_type);
  EXPECT_FALSE(m2.has_duty_output);
  EXPECT_EQ(m2.generator.input_dim(), 32u + 2u + 12u + 1u);
  EXPECT_EQ(m2.discriminator.trunk.input_dim(), 24u + 12u + 1u);
  ASSERT_TRUE(m2.discriminator.class_head.has_value());
  EXPECT_EQ(m2.discriminator.class_head->output_dim(), 2u);
}

TEST(Architecture, ConditionsCanBeDisabled) {
  auto c = quick_config(0);
  c.use_month_condition = false;
  c.use_starting_point_condition = false;
  const auto set = family_set({site("wf", "wind", Family::wind, 0.3)});
  const auto m = initialize_model(set, c, GanMode::single_type);
  EXPECT_EQ(m.generator.input_dim(), 32u + 1u);
}

TEST(Train, ModeRequirements) {
  const auto two = family_set({site("pv", "solar", Family::solar, 0.2), site("wf", "wind", Family::wind, 0.3)});
  EXPECT_THROW(train(two, quick_config(1), GanMode::single_type), DataError);
  const auto one = family_set({site("pv", "solar", Family::solar, 0.2)});
  EXPECT_THROW(train(one, quick_config(1), GanMode::multi_type), DataError);
  EXPECT_THROW(train(TrainingSet{}, quick_config(1), GanMode::single_type), DataError);
}

TEST(Train, ZeroEpochsReturnsInitializedModel) {
  const auto set = family_set({site("wf", "wind", Family::wind, 0.3)});
  const auto trained = train(set, quick_config(0), GanMode::single_type);
  const auto init = initialize_model(set, quick_config(0), GanMode::single_type);
  EXPECT_TRUE(trained.generator == init.generator);
  EXPECT_TRUE(trained.discriminator.trunk == init.discriminator.trunk);
  EXPECT_TRUE(trained.history.empty());
}

TEST(Train, DeterministicForSeed) {
  const auto set = family_set({site("pk", "peaker", Family::duty, 0.05)});
  const auto a = train(set, quick_config(3, 17), GanMode::single_type);
  const auto b = train(set, quick_config(3, 17), GanMode::single_type);
  EXPECT_EQ(model_to_json(a).dump(), model_to_json(b).dump());
  const auto c = train(set, quick_config(3, 18), GanMode::single_type);
  EXPECT_FALSE(a.generator == c.generator);
}

TEST(Train, HistoryHasFiniteLossPerEpoch) {
  const auto set = family_set({site("pv", "solar", Family::solar, 0.2), site("pk", "peaker", Family::duty, 0.05)});
  const auto m = train(set, quick_config(4), GanMode::multi_type);
  ASSERT_EQ(m.history.size(), 4u);
  for (const auto& h : m.history) {
    EXPECT_TRUE(std::isfinite(h.discriminator));
    EXPECT_TRUE(std::isfinite(h.generator));
    EXPECT_TRUE(std::isfinite(h.classification));
    EXPECT_GT(h.classification, 0.0);
  }
}

TEST(Train, ZeroLambdaMatchesNoAuxGradient) {
  const auto set = family_set({site("pv", "solar", Family::solar, 0.2), site("wf", "wind", Family::wind, 0.3)});
  auto with_zero_lambda = quick_config(3);
  with_zero_lambda.lambda_cls = 0.0;
  auto without_aux = quick_config(3);
  without_aux.aux_head_gradient = false;
  const auto a = train(set, with_zero_lambda, GanMode::multi_type);
  const auto b = train(set, without_aux, GanMode::multi_type);
  EXPECT_TRUE(a.generator == b.generator);
  EXPECT_TRUE(a.discriminator.trunk == b.discriminator.trunk);
  EXPECT_TRUE(a.discriminator.adversarial_head == b.discriminator.adversarial_head);
  EXPECT_TRUE(*a.discriminator.class_head == *b.discriminator.class_head);
}

TEST(Train, DivergenceGuardAborts) {
  const auto set = family_set({site("pv", "solar", Family::solar, 0.2), site("wf", "wind", Family::wind, 0.3)});
  auto c = quick_config(1);
  c.lambda_cls = 5000.0;
  EXPECT_THROW(train(set, c, GanMode::multi_type), DivergenceError);
}

TEST(Train, CollapsesToConstantDataPoint) {
  const double c = 0.6;
  HourlyProfile p{"k", {"hydro", false, 0}, 2021, 10.0, std::vector<double>(8760, c * 10.0)};
  const SiteMeta m{"k", p.generation_type, 10.0};
  const auto set = build_training_set(std::span(&p, 1), std::span(&m, 1));
  const auto model = train(set, quick_config(200), GanMode::single_type);
  nn::Rng rng(5);
  std::array<double, kDayHours> mean{};
  const int n = 500;
  for (int i = 0; i < n; ++i) {
    const ConditionVector cond{0, 1, 1 + i % 12, c};
    const auto z = draw_latent(1, model.config.latent_dim, rng);
    const auto s = sample(model, cond, z.data());
    for (std::size_t h = 0; h < kDayHours; ++h) mean[h] += s.shape[h] / n;
  }
  for (double v : mean) EXPECT_NEAR(v, c, 0.05);
}

TEST(Sample, PureRangeAndShape) {
  const auto set = family_set({site("pk", "peaker", Family::duty, 0.05)});
  const auto model = train(set, quick_config(2), GanMode::single_type);
  nn::Rng rng(8);
  const auto z = draw_latent(1, model.config.latent_dim, rng);
  const ConditionVector cond{0, 1, 7, 0.3};
  const auto a = sample(model, cond, z.data());
  const auto b = sample(model, cond, z.data());
  EXPECT_EQ(a.shape, b.shape);
  ASSERT_TRUE(a.duty.has_value());
  EXPECT_EQ(*a.duty, *b.duty);
  for (double v : a.shape) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_GT(*a.duty, 0.0);
  EXPECT_LT(*a.duty, 1.0);
  const std::vector<double> short_z(5, 0.0);
  EXPECT_THROW(sample(model, cond, short_z), DimensionError);
  EXPECT_THROW(sample(model, ConditionVector{0, 2, 7, 0.3}, z.data()), DimensionError);
}

TEST(Sample, ThousandDrawsAreDistinct) {
  const auto set = family_set({site("wf", "wind", Family::wind, 0.3)});
  const auto model = train(set, quick_config(2), GanMode::single_type);
  nn::Rng rng(9);
  std::set<DailyShape> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto z = draw_latent(1, model.config.latent_dim, rng);
    seen.insert(sample(model, ConditionVector{0, 1, 3, 0.4}, z.data()).shape);
  }
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Sample, NonIntermittentTypeInMixedModelHasNoDuty) {
  const auto set = family_set({site("pv", "solar", Family::solar, 0.2), site("pk", "peaker", Family::duty, 0.05)});
  const auto model = train(set, quick_config(1), GanMode::multi_type);
  nn::Rng rng(10);
  const auto z = draw_latent(1, model.config.latent_dim, rng);
  const auto pk = model.type_index("peaker");
  const auto pv = model.type_index("solar");
  EXPECT_TRUE(sample(model, ConditionVector{pk, 2, 1, 0.0}, z.data()).duty.has_value());
  EXPECT_FALSE(sample(model, ConditionVector{pv, 2, 1, 0.0}, z.data()).duty.has_value());
}

TEST(Sample, StartingPointIsHonored) {
  const auto set = family_set({site("wf", "wind", Family::wind, 0.3)}, 2);
  const auto model = train(set, quick_config(GanConfig{}.epochs), GanMode::single_type);
  nn::Rng rng(12);
  std::vector<double> starts, firsts;
  for (const auto& s : set.samples) {
    const auto z = draw_latent(1, model.config.latent_dim, rng);
    starts.push_back(s.condition.starting_point);
    firsts.push_back(sample(model, s.condition, z.data()).shape[0]);
  }
  EXPECT_GE(stats::pearson(starts, firsts), 0.8);
}

TEST(Duty, KeepMaskExamples) {
  std::array<double, kDayHours> increasing{};
  for (std::size_t h = 0; h < kDayHours; ++h) increasing[h] = static_cast<double>(h);
  const auto half = detail::duty_keep_mask(increasing, 0.5);
  for (std::size_t h = 0; h < kDayHours; ++h) EXPECT_EQ(half[h], h >= 12);
  const std::array<double, kDayHours> flat{};
  const auto ties = detail::duty_keep_mask(flat, 0.25);
  for (std::size_t h = 0; h < kDayHours; ++h) EXPECT_EQ(ties[h], h < 6);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto set = family_set({site("pv", "solar", Family::solar, 0.2), site("pk", "peaker", Family::duty, 0.05)});
    model_ = train(set, quick_config(2), GanMode::multi_type);
  }
  TrainedGanModel model_;
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  testing::TempDir dir;
  save_model(model_, dir / "m.json");
  const auto back = load_model(dir / "m.json");
  EXPECT_EQ(model_to_json(back).dump(), model_to_json(model_).dump());
  nn::Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    const auto z = draw_latent(1, model_.config.latent_dim, rng);
    const ConditionVector c{static_cast<std::size_t>(i % 2), 2, 1 + i % 12, 0.1 * (i % 10)};
    const auto a = sample(model_, c, z.data());
    const auto b = sample(back, c, z.data());
    EXPECT_EQ(a.shape, b.shape);
    EXPECT_EQ(a.duty, b.duty);
  }
  EXPECT_EQ(back.type_stats.size(), model_.type_stats.size());
  EXPECT_EQ(back.type_stats[0].start_points, model_.type_stats[0].start_points);
  EXPECT_EQ(back.history.size(), model_.history.size());
}

TEST_F(CheckpointTest, TruncatedFileIsCorrupt) {
  testing::TempDir dir;
  save_model(model_, dir / "m.json");
  const auto text = testing::read_file(dir / "m.json");
  testing::write_file(dir / "t.json", text.substr(0, text.size() / 2));
  EXPECT_THROW(load_model(dir / "t.json"), CorruptCheckpointError);
}

TEST_F(CheckpointTest, ShortWeightArrayIsCorrupt) {
  auto j = model_to_json(model_);
  j["generator"]["layers"][0]["bias"] = "0.5 0.25";
  EXPECT_THROW(model_from_json(j), CorruptCheckpointError);
  auto k = model_to_json(model_);
  k["mode"] = "triple";
  EXPECT_THROW(model_from_json(k), CorruptCheckpointError);
}

TEST_F(CheckpointTest, UnknownVersionIsRejected) {
  auto j = model_to_json(model_);
  j["schema_version"] = kCheckpointSchemaVersion + 1;
  EXPECT_THROW(model_from_json(j), CheckpointVersionError);
  EXPECT_THROW(load_model("/nonexistent/model.json"), CheckpointError);
}

}  // namespace
}  // namespace profgan::gan

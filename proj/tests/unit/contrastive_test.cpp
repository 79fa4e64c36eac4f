#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dmrn/contrastive.hpp"
#include "support/gradcheck.hpp"

namespace dmrn {
namespace {

TEST(PairLoss, HandEvaluatedValues) {
  EXPECT_NEAR(pair_loss(0.4, 1, 1.0), 0.18, 1e-12);   // (1 - 0.4)^2 / 2
  EXPECT_NEAR(pair_loss(0.5, 0, 1.0), 0.125, 1e-12);  // 0.5^2 / 2
  EXPECT_EQ(pair_loss(1.0, 1, 1.0), 0.0);
  EXPECT_EQ(pair_loss(2.5, 1, 1.0), 0.0);
  EXPECT_EQ(pair_loss(0.0, 0, 1.0), 0.0);
  EXPECT_NEAR(pair_loss(0.0, 1, 1.0), 0.5, 1e-12);
}

TEST(PairLoss, NaNDistanceIsNotMaskedByTheMargin) {
  EXPECT_TRUE(std::isnan(pair_loss(std::nan(""), 1, 1.0)));
  EXPECT_TRUE(std::isnan(pair_loss(std::nan(""), 0, 1.0)));
}

TEST(PairLoss, DerivativeAndKinks) {
  EXPECT_NEAR(pair_loss_derivative(0.0, 1, 1.0), -1.0, 1e-12);
  EXPECT_EQ(pair_loss_derivative(1.0, 1, 1.0), 0.0);
  EXPECT_NEAR(pair_loss_derivative(0.3, 0, 1.0), 0.3, 1e-12);
  for (double d : {0.1, 0.45, 0.8, 1.3}) {
    for (int y : {0, 1}) {
      const double h = 1e-6;
      const double numeric = (pair_loss(d + h, y, 1.0) - pair_loss(d - h, y, 1.0)) / (2 * h);
      EXPECT_NEAR(pair_loss_derivative(d, y, 1.0), numeric, 1e-8);
    }
  }
}

TEST(StageDistance, Euclidean) {
  const std::vector<double> a{0, 0, 0}, b{1, 2, 2};
  EXPECT_DOUBLE_EQ(stage_distance(a, b), 3.0);
  const std::vector<double> c{1.0};
  EXPECT_THROW(stage_distance(a, c), ShapeError);
}

TEST(TotalLoss, WeightedSumOverUsedStages) {
  LossConfig cfg;
  cfg.stages = StageSet{2, 4};
  cfg.stage_weights = {1.0, 2.0, 1.0, 0.5};
  PairDistances p;
  p.label = 1;
  p.distance[1] = 0.4;
  p.distance[3] = 0.0;
  PairDistances q;
  q.label = 0;
  q.distance[1] = 0.5;
  q.distance[3] = 2.0;
  const std::vector<PairDistances> pairs{p, q};
  const double expected = 2.0 * 0.18 + 0.5 * 0.5 + 2.0 * 0.125 + 0.5 * 2.0;
  EXPECT_NEAR(total_loss(pairs, cfg), expected, 1e-12);
  EXPECT_EQ(loss_term_count(pairs.size(), cfg), 4u);

  PairDistances missing;
  missing.distance[1] = 0.2;
  EXPECT_THROW(total_loss(std::vector<PairDistances>{missing}, cfg), ContractError);
}

TEST(TotalLoss, TermCountFourStagesVersusOne) {
  LossConfig all, last;
  last.stages = StageSet{4};
  EXPECT_EQ(loss_term_count(10, all), 40u);
  EXPECT_EQ(loss_term_count(10, last), 10u);
}

TEST(LossConfigValidate, RejectsBadValues) {
  LossConfig c;
  c.margin = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.stage_weights[0] = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(MultiScaleLoss, IdenticalSameClassInputsGiveExactlyZero) {
  BackboneConfig bc;
  bc.stage_channels = {4, 4, 8, 8};
  bc.blocks_per_stage = 1;
  auto params = init_params<double>(bc, 3);
  std::mt19937_64 rng(1);
  Tensor<double> x = testing::random_tensor({3, 1, 64, 64}, rng);
  Tape<double> tape;
  TwinNetwork<double> twin(params);
  auto out = twin.forward(tape.constant(x), tape.constant(x), Mode::train, StageSet::all());
  const std::vector<int> labels{0, 0, 0};
  auto loss = multi_scale_loss(out[0], out[1], labels, LossConfig{});
  EXPECT_EQ(loss.total.value().item(), 0.0);
  EXPECT_EQ(loss.term_count, 12u);
}

TEST(MultiScaleLoss, MatchesScalarReference) {
  std::mt19937_64 rng(5);
  StageEmbeddings<double> a, b;
  Tape<double> tape;
  LossConfig cfg;
  cfg.stage_weights = {1.0, 0.5, 2.0, 1.5};
  std::vector<Tensor<double>> ea, eb;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    ea.push_back(testing::random_tensor({3, 2}, rng, 0.4));
    eb.push_back(testing::random_tensor({3, 2}, rng, 0.4));
    a[s] = tape.constant(ea[s]);
    b[s] = tape.constant(eb[s]);
  }
  const std::vector<int> labels{0, 1, 1};
  auto loss = multi_scale_loss(a, b, labels, cfg);

  std::vector<PairDistances> pairs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    pairs[i].label = labels[i];
    for (std::size_t s = 0; s < kStageCount; ++s) {
      std::vector<double> u(ea[s].data().begin() + 2 * i, ea[s].data().begin() + 2 * i + 2);
      std::vector<double> v(eb[s].data().begin() + 2 * i, eb[s].data().begin() + 2 * i + 2);
      pairs[i].distance[s] = stage_distance(u, v);
    }
  }
  EXPECT_NEAR(loss.total.value().item(), total_loss(pairs, cfg), 1e-12);
}

TEST(MultiScaleLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  LossConfig cfg;
  cfg.stages = StageSet{1, 3, 4};
  std::vector<Tensor<double>> ea, eb;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    ea.push_back(testing::random_tensor({4, 3}, rng, 0.3));
    eb.push_back(testing::random_tensor({4, 3}, rng, 0.3));
  }
  std::vector<Tensor<double>*> tensors;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    tensors.push_back(&ea[s]);
    tensors.push_back(&eb[s]);
  }
  const std::vector<int> labels{0, 1, 0, 1};
  auto r = testing::check_gradients(tensors, [&](Tape<double>&, const testing::Leaves& v) {
    StageEmbeddings<double> a, b;
    for (std::size_t s = 0; s < kStageCount; ++s) {
      if (!cfg.stages.contains(s)) continue;
      a[s] = v[2 * s];
      b[s] = v[2 * s + 1];
    }
    return multi_scale_loss(a, b, labels, cfg).total;
  });
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(MultiScaleLoss, MissingStageIsAContractError) {
  Tape<double> tape;
  StageEmbeddings<double> a, b;
  a[3] = tape.constant(Tensor<double>(Shape{1, 2}));
  b[3] = tape.constant(Tensor<double>(Shape{1, 2}));
  const std::vector<int> labels{0};
  EXPECT_THROW(multi_scale_loss(a, b, labels, LossConfig{}), ContractError);
  LossConfig last;
  last.stages = StageSet{4};
  EXPECT_NO_THROW(multi_scale_loss(a, b, labels, last));
}

}  // namespace
}  // namespace dmrn

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dmrn/checkpoint.hpp"
#include "dmrn/trainer.hpp"

namespace dmrn {
namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.model.input_size = 32;
  c.model.stage_channels = {4, 4, 8, 8};
  c.model.blocks_per_stage = 1;
  c.epochs = 3;
  c.batch_size = 4;
  c.seed = 5;
  return c;
}

// Two classes: bright disc versus dark square, with pixel noise.
struct Toy {
  Tensor<float> images;
  std::vector<int> labels;
};

Toy two_class_toy(std::size_t per_class, std::size_t size, std::uint64_t seed) {
  Toy toy;
  toy.images = Tensor<float>(Shape{2 * per_class, 1, size, size});
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 0 : 1;
    toy.labels.push_back(label);
    const float c = 0.5f * static_cast<float>(size);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const float dx = static_cast<float>(x) - c, dy = static_cast<float>(y) - c;
        const bool inside = label == 0 ? dx * dx + dy * dy < c * c * 0.4f
                                       : std::abs(dx) < c * 0.5f && std::abs(dy) < c * 0.5f;
        toy.images.at(i, 0, y, x) = (inside ? (label == 0 ? 1.0f : -0.5f) : 0.0f) + noise(rng);
      }
  }
  return toy;
}

std::vector<float> flatten(ModelParams<float>& p) {
  std::vector<float> out;
  p.for_each_parameter([&](const std::string&, Tensor<float>& t) {
    out.insert(out.end(), t.data().begin(), t.data().end());
  });
  return out;
}

TEST(TrainConfigValidate, RejectsOutOfRange) {
  TrainConfig c = small_config();
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.learning_rate = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, Preconditions) {
  const Toy toy = two_class_toy(2, 32, 1);
  const std::vector<int> one_class(4, 0);
  EXPECT_THROW(train(toy.images, one_class, small_config()), ContractError);
  const std::vector<int> short_labels{0, 1};
  EXPECT_THROW(train(toy.images, short_labels, small_config()), ShapeError);
  TrainConfig wrong = small_config();
  wrong.model.input_size = 64;
  EXPECT_THROW(train(toy.images, toy.labels, wrong), ShapeError);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const Toy toy = two_class_toy(4, 32, 2);
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  auto initial = init_params<float>(c.model, c.seed);
  auto result = train(toy.images, toy.labels, c);
  EXPECT_EQ(flatten(result.params), flatten(initial));

  bool stats_moved = false;
  std::vector<std::vector<float>> before;
  initial.for_each_buffer(
      [&](const std::string&, Tensor<float>& t) { before.emplace_back(t.data().begin(), t.data().end()); });
  std::size_t k = 0;
  result.params.for_each_buffer([&](const std::string&, Tensor<float>& t) {
    if (std::vector<float>(t.data().begin(), t.data().end()) != before[k++]) stats_moved = true;
  });
  EXPECT_TRUE(stats_moved);
}

TEST(Train, IdenticalImagesPerClassLeaveOnlyDissimilarityLoss) {
  Toy toy = two_class_toy(5, 32, 3);
  for (std::size_t i = 1; i < 10; ++i) {
    const std::size_t src = i < 5 ? 0 : 5;
    const std::size_t per = 32 * 32;
    std::copy_n(toy.images.data().begin() + src * per, per, toy.images.data().begin() + i * per);
  }
  TrainConfig c = small_config();
  c.epochs = 1;
  c.batch_size = 10;
  auto result = train(toy.images, toy.labels, c);
  const auto& e = result.log.epochs.at(0);
  EXPECT_GT(e.same_pairs, 0u);
  EXPECT_EQ(e.same_loss, 0.0);
  EXPECT_NEAR(e.raw_loss, e.different_loss, 1e-6 * e.raw_loss);
}

TEST(Train, LossDescendsOnTwoClassToy) {
  const Toy toy = two_class_toy(10, 32, 4);
  TrainConfig c = small_config();
  c.epochs = 50;
  c.batch_size = 10;
  auto result = train(toy.images, toy.labels, c);
  ASSERT_EQ(result.log.epochs.size(), 50u);
  const double first = result.log.epochs.front().mean_pair_loss;
  const double last = result.log.epochs.back().mean_pair_loss;
  for (const auto& e : result.log.epochs) EXPECT_TRUE(std::isfinite(e.raw_loss));
  EXPECT_LT(last, 0.2 * first) << "first " << first << " last " << last;
}

TEST(Train, SameSeedSameCheckpointBytes) {
  const Toy toy = two_class_toy(4, 32, 5);
  auto a = train(toy.images, toy.labels, small_config());
  auto b = train(toy.images, toy.labels, small_config());
  EXPECT_EQ(encode_checkpoint(a.params), encode_checkpoint(b.params));
  TrainConfig other = small_config();
  other.seed = 6;
  auto c = train(toy.images, toy.labels, other);
  EXPECT_NE(encode_checkpoint(a.params), encode_checkpoint(c.params));
}

TEST(Train, NonFiniteLossReportsEpochBatchAndDistances) {
  Toy toy = two_class_toy(3, 32, 6);
  toy.images[17] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(toy.images, toy.labels, small_config());
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("stage4="), std::string::npos) << msg;
  }
}

TEST(Train, LogRecordsEveryEpochAndStage) {
  const Toy toy = two_class_toy(3, 32, 7);
  TrainConfig c = small_config();
  c.loss.stages = StageSet{2, 4};
  std::size_t callbacks = 0;
  auto result = train(toy.images, toy.labels, c, [&](const EpochRecord&) { ++callbacks; });
  EXPECT_EQ(callbacks, 3u);
  for (const auto& e : result.log.epochs) {
    EXPECT_FALSE(e.stage_loss[0].has_value());
    EXPECT_TRUE(e.stage_loss[1].has_value());
    EXPECT_NEAR(*e.stage_loss[1] + *e.stage_loss[3], e.raw_loss, 1e-6 * (1 + e.raw_loss));
    EXPECT_EQ(e.same_pairs + e.different_pairs, 6u);
    EXPECT_NEAR(e.mean_pair_loss, e.raw_loss / 6.0, 1e-12);
  }
  std::ostringstream csv;
  result.log.write_csv(csv);
  std::string header;
  std::getline(std::istringstream(csv.str()) >> std::ws, header);
  EXPECT_EQ(header,
            "epoch,raw_loss,mean_pair_loss,stage1_loss,stage2_loss,stage3_loss,stage4_loss,"
            "same_loss,different_loss,same_pairs,different_pairs,learning_rate");
}

TEST(Train, StepDecayScheduleIsLogged) {
  const Toy toy = two_class_toy(2, 32, 8);
  TrainConfig c = small_config();
  c.epochs = 4;
  c.lr_step_epochs = 2;
  c.lr_gamma = 0.5;
  auto result = train(toy.images, toy.labels, c);
  EXPECT_DOUBLE_EQ(result.log.epochs[1].learning_rate, 0.01);
  EXPECT_DOUBLE_EQ(result.log.epochs[2].learning_rate, 0.005);
}

TEST(Train, PairsAreRedrawnEachEpoch) {
  TrainConfig c = small_config();
  const std::vector<int> labels{0, 0, 0, 1, 1, 1, 2, 2};
  const auto e1 = sample_pairs(labels, epoch_sampler(c, 1)).pairs;
  const auto e2 = sample_pairs(labels, epoch_sampler(c, 2)).pairs;
  EXPECT_NE(e1, e2);
  EXPECT_EQ(e1, sample_pairs(labels, epoch_sampler(c, 1)).pairs);
}

}  // namespace
}  // namespace dmrn

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dmrn/checkpoint.hpp"
#include "dmrn/classifier.hpp"

namespace dmrn {
namespace {

namespace fs = std::filesystem;

BackboneConfig config() {
  BackboneConfig c;
  c.input_size = 32;
  c.stage_channels = {4, 8, 8, 16};
  c.blocks_per_stage = 2;
  return c;
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dmrn_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  auto params = init_params<float>(config(), 9);
  params.backbone.stem.stats.running_mean[0] = 0.125f;
  save_checkpoint(params, dir_ / "a.dmrn");
  auto loaded = load_checkpoint<float>(dir_ / "a.dmrn");
  save_checkpoint(loaded, dir_ / "b.dmrn");
  EXPECT_EQ(slurp(dir_ / "a.dmrn"), slurp(dir_ / "b.dmrn"));
  EXPECT_EQ(loaded.config, params.config);
  EXPECT_EQ(loaded.backbone.stem.stats.running_mean[0], 0.125f);
}

TEST_F(CheckpointTest, RestoredModelEmbedsBitwiseEqual) {
  auto params = init_params<float>(config(), 10);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d;
  Tensor<float> batch(Shape{3, 1, 32, 32});
  for (auto& v : batch.data()) v = d(rng);
  const Tensor<float> before = embed_batch(params, batch);
  save_checkpoint(params, dir_ / "m.dmrn");
  auto loaded = load_checkpoint<float>(dir_ / "m.dmrn");
  EXPECT_TRUE(embed_batch(loaded, batch) == before);
}

TEST_F(CheckpointTest, DoubleRoundTrip) {
  auto params = init_params<double>(config(), 11);
  const std::string bytes = encode_checkpoint(params);
  auto back = decode_checkpoint<double>(bytes);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_THROW(decode_checkpoint<float>(bytes), DataError);
}

TEST_F(CheckpointTest, TruncationIsDetected) {
  auto params = init_params<float>(config(), 12);
  const std::string bytes = encode_checkpoint(params);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() / 2,
                          bytes.size() - 1}) {
    EXPECT_THROW(decode_checkpoint<float>(std::string_view(bytes).substr(0, cut)), DataError)
        << "cut at " << cut;
  }
}

TEST_F(CheckpointTest, CorruptRecordIsNamed) {
  auto params = init_params<float>(config(), 13);
  std::string bytes = encode_checkpoint(params);
  const std::string needle = "\"name\":\"stage2.block0.first.bn.gamma\"";
  const auto at = bytes.find(needle);
  ASSERT_NE(at, std::string::npos);
  // Rename the record in place (same length) so the manifest no longer
  // matches the model layout.
  bytes[at + needle.size() - 2] = 'x';
  try {
    decode_checkpoint<float>(bytes);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("stage2.block0.first.bn"), std::string::npos) << e.what();
  }
}

TEST_F(CheckpointTest, BadMagicAndMissingFile) {
  EXPECT_THROW(decode_checkpoint<float>("NOTACKPT........"), DataError);
  EXPECT_THROW(load_checkpoint<float>(dir_ / "missing.dmrn"), DataError);
}

}  // namespace
}  // namespace dmrn

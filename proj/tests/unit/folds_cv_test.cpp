#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <set>

#include "dmrn/cross_validation.hpp"
#include "dmrn/error.hpp"
#include "dmrn/folds.hpp"

namespace dmrn {
namespace {

std::vector<int> labels_with_counts(const std::vector<std::size_t>& counts) {
  std::vector<int> out;
  for (std::size_t c = 0; c < counts.size(); ++c) out.insert(out.end(), counts[c], static_cast<int>(c));
  return out;
}

TEST(Folds, ReferenceCohortSizes) {
  const auto labels = labels_with_counts({54, 35, 58, 33, 49});
  ASSERT_EQ(labels.size(), 229u);
  const auto plan = make_folds(labels, 5, 1);
  std::vector<std::size_t> sizes;
  for (const auto& f : plan.folds) sizes.push_back(f.size());
  std::sort(sizes.rbegin(), sizes.rend());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{46, 46, 46, 46, 45}));
}

TEST(Folds, DisjointCoveringAndStratified) {
  const std::vector<std::size_t> counts{54, 35, 58, 33, 49};
  const auto labels = labels_with_counts(counts);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto plan = make_folds(labels, 5, seed);
    std::vector<int> seen(labels.size(), 0);
    for (std::size_t f = 0; f < plan.k(); ++f) {
      for (std::size_t s : plan.folds[f]) ++seen[s];
      // A study is in exactly one of train/test.
      const auto train = plan.train_indices(f);
      EXPECT_EQ(train.size() + plan.folds[f].size(), labels.size());
      for (std::size_t s : plan.folds[f]) {
        EXPECT_FALSE(std::binary_search(train.begin(), train.end(), s));
      }
      for (std::size_t c = 0; c < counts.size(); ++c) {
        const auto in_fold = static_cast<std::size_t>(std::count_if(
            plan.folds[f].begin(), plan.folds[f].end(),
            [&](std::size_t s) { return labels[s] == static_cast<int>(c); }));
        const double expected = static_cast<double>(counts[c]) / 5.0;
        EXPECT_LE(std::abs(static_cast<double>(in_fold) - expected), 1.0);
      }
    }
    for (int n : seen) ASSERT_EQ(n, 1);
  }
}

TEST(Folds, DeterministicPerSeed) {
  const auto labels = labels_with_counts({7, 9, 4});
  EXPECT_EQ(make_folds(labels, 4, 3).folds, make_folds(labels, 4, 3).folds);
  EXPECT_NE(make_folds(labels, 4, 3).folds, make_folds(labels, 4, 4).folds);
}

TEST(Folds, RejectsBadK) {
  const auto labels = labels_with_counts({2, 2});
  EXPECT_THROW(make_folds(labels, 1, 0), ContractError);
  EXPECT_THROW(make_folds(labels, 5, 0), ContractError);
  EXPECT_NO_THROW(make_folds(labels, 4, 0));
}

// Every slice of class c is the same image, distinct across classes, so
// any embedding separates the classes.
Dataset constant_per_class(std::size_t classes, std::size_t studies_per_class) {
  Dataset d;
  d.num_classes = classes;
  d.image_shape = Shape{1, 32, 32};
  for (std::size_t c = 0; c < classes; ++c) d.class_names.push_back("c" + std::to_string(c));
  for (std::size_t c = 0; c < classes; ++c) {
    Tensor<float> img(d.image_shape);
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        img.data()[y * 32 + x] =
            (x / 8 + y / 8 + c) % (c + 2) == 0 ? 1.0f : -0.3f * static_cast<float>(c);
      }
    for (std::size_t s = 0; s < studies_per_class; ++s) {
      Study st;
      st.id = "s" + std::to_string(c) + "_" + std::to_string(s);
      st.label = static_cast<int>(c);
      for (std::size_t k = 0; k < 2; ++k) {
        st.slices.push_back({st.id + "_" + std::to_string(k), "", img});
      }
      d.studies.push_back(std::move(st));
    }
  }
  return d;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.model.input_size = 32;
  c.model.stage_channels = {2, 4, 4, 8};
  c.model.blocks_per_stage = 1;
  c.epochs = 2;
  c.batch_size = 4;
  return c;
}

TEST(CrossValidation, IdenticalImagesPerClassArePerfect) {
  const Dataset d = constant_per_class(3, 5);
  CvConfig cv;
  cv.k = 5;
  std::size_t callbacks = 0;
  const auto r = cross_validate(d, tiny_train(), cv, [&](const FoldResult&) { ++callbacks; });
  EXPECT_EQ(callbacks, 5u);
  EXPECT_EQ(r.pooled.total(), d.studies.size());
  EXPECT_EQ(*r.report.accuracy.value(), 1.0);
  ASSERT_TRUE(r.baseline_report);
  EXPECT_EQ(*r.baseline_report->accuracy.value(), 1.0);
  std::set<std::size_t> seen;
  for (const auto& f : r.folds)
    for (const auto& o : f.outcomes) {
      EXPECT_EQ(o.fold, f.fold);
      seen.insert(o.study_index);
    }
  EXPECT_EQ(seen.size(), d.studies.size());
}

TEST(CrossValidation, ParallelFoldsMatchSerial) {
  const Dataset d = constant_per_class(2, 4);
  CvConfig serial, parallel;
  serial.k = parallel.k = 4;
  parallel.jobs = 3;
  serial.baseline = parallel.baseline = false;
  const auto a = cross_validate(d, tiny_train(), serial);
  const auto b = cross_validate(d, tiny_train(), parallel);
  EXPECT_EQ(a.pooled, b.pooled);
  for (std::size_t f = 0; f < a.folds.size(); ++f) {
    ASSERT_EQ(a.folds[f].outcomes.size(), b.folds[f].outcomes.size());
    for (std::size_t i = 0; i < a.folds[f].outcomes.size(); ++i) {
      EXPECT_EQ(a.folds[f].outcomes[i].prediction.probabilities,
                b.folds[f].outcomes[i].prediction.probabilities);
    }
  }
}

TEST(CrossValidation, ErrorsNameTheFold) {
  Dataset d = constant_per_class(2, 4);
  d.studies[0].slices[0].image.data()[5] = std::numeric_limits<float>::quiet_NaN();
  CvConfig cv;
  cv.k = 4;
  cv.baseline = false;
  try {
    cross_validate(d, tiny_train(), cv);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("fold ", 0), 0u) << e.what();
  }
}

}  // namespace
}  // namespace dmrn

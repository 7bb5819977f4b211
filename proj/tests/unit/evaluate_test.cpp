// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace tinybatt {
namespace {

TEST(RepeatedAccuracy, ConstantPredictorOnBalancedData) {
  std::vector<int> labels, preds;
  for (int i = 0; i < 40; ++i) labels.push_back(i % 2), preds.push_back(0);
  const auto s = repeated_accuracy(preds, labels, 10, 1);
  EXPECT_EQ(s.per_repeat.size(), 10u);
  EXPECT_EQ(s.formatted(), "50.00±0.00%");
}

TEST(RepeatedAccuracy, SingleRepeatHasZeroSpread) {
  std::vector<int> labels{0, 0, 1, 1, 1}, preds{0, 1, 1, 0, 1};
  const auto s = repeated_accuracy(preds, labels, 1, 5, 1.0);
  EXPECT_EQ(s.stddev, 0.0);
  EXPECT_DOUBLE_EQ(s.mean, 60.0);
}

TEST(RepeatedAccuracy, StratifiedSubsetSizes) {
  // With fraction 0.5, 7 + 4 samples give floor(3.5) + floor(2) = 5 per repeat.
  std::vector<int> labels(7, 0);
  labels.insert(labels.end(), 4, 1);
  std::vector<int> preds(11, 0);
  const auto s = repeated_accuracy(preds, labels, 20, 3);
  for (double a : s.per_repeat) EXPECT_DOUBLE_EQ(a, 60.0);
}

TEST(RepeatedAccuracy, SeededAndSampleStddev) {
  Rng rng(2);
  std::vector<int> labels, preds;
  for (int i = 0; i < 100; ++i) labels.push_back(i % 3), preds.push_back(static_cast<int>(rng.below(3)));
  const auto a = repeated_accuracy(preds, labels, 10, 42), b = repeated_accuracy(preds, labels, 10, 42);
  EXPECT_EQ(a.per_repeat, b.per_repeat);
  double mean = 0;
  for (double v : a.per_repeat) mean += v / 10;
  double ss = 0;
  for (double v : a.per_repeat) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(a.mean, mean, 1e-12);
  EXPECT_NEAR(a.stddev, std::sqrt(ss / 9), 1e-12);
}

TEST(RepeatedAccuracy, Errors) {
  std::vector<int> l{0, 1}, p{0, 1};
  EXPECT_THROW(repeated_accuracy(p, l, 0, 1), UsageError);
  EXPECT_THROW(repeated_accuracy(p, l, 1, 1, 0.0), UsageError);
  EXPECT_THROW(repeated_accuracy(std::vector<int>{0}, l, 1, 1), ParameterError);
}

TEST(LoadDataset, FixtureLayout) {
  const auto ds = load_dataset(oracle::source_path("data/fixture"));
  EXPECT_EQ(ds.classes, (std::vector<std::string>{"background", "fish"}));
  EXPECT_EQ(ds.inputs.size(), 40u);
  EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 1), 20);
  for (const auto& x : ds.inputs) EXPECT_EQ(x.size(), 1024u);
}

TEST(LoadDataset, LayoutErrors) {
  oracle::TempDir dir("ds");
  EXPECT_THROW(load_dataset(dir / "missing"), UsageError);
  std::filesystem::create_directories(dir / "only");
  EXPECT_THROW(load_dataset(dir.path), UsageError);
  std::filesystem::create_directories(dir / "other");
  EXPECT_THROW(load_dataset(dir.path), UsageError);  // empty class directories
  write_file(dir / "stray.ppm", encode_ppm(RawImage{1, 1, {1, 2, 3}}));
  EXPECT_THROW(load_dataset(dir.path), UsageError);
}

}  // namespace
}  // namespace tinybatt

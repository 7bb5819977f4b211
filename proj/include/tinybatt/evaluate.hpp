// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Labeled dataset loading (one directory per class of PPM files) and the
// repeated-evaluation accuracy protocol: each repeat draws a seeded,
// class-stratified subset of the data and scores the model on it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "tinybatt/error.hpp"
#include "tinybatt/model_io.hpp"
#include "tinybatt/numeric.hpp"
#include "tinybatt/preprocess.hpp"

namespace tinybatt {

struct LabeledDataset {
  std::vector<std::string> classes;
  std::vector<std::filesystem::path> files;
  std::vector<std::vector<float>> inputs;
  std::vector<int> labels;
};

// Class index = position of the class directory in sorted name order.
inline LabeledDataset load_dataset(const std::filesystem::path& root, ChannelMode mode = ChannelMode::luma) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw UsageError("dataset '" + root.string() + "' is not a directory");
  LabeledDataset ds;
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
    else if (e.path().extension() == ".ppm")
      throw UsageError("dataset root contains image files; expected one sub-directory per class");
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2) throw UsageError("dataset needs at least two class directories");
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    ds.classes.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[c]))
      if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw UsageError("class directory '" + class_dirs[c].string() + "' has no .ppm files");
    for (const auto& f : files) {
      ds.files.push_back(f);
      ds.inputs.push_back(preprocess_ppm(read_file(f), mode).tensor);
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

struct AccuracySummary {
  std::vector<double> per_repeat;  // percent
  double mean = 0;
  double stddev = 0;  // sample standard deviation, 0 for a single repeat

  std::string formatted() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f±%.2f%%", mean, stddev);
    return buf;
  }
};

inline AccuracySummary summarize(std::vector<double> per_repeat) {
  AccuracySummary s;
  s.per_repeat = std::move(per_repeat);
  const double n = static_cast<double>(s.per_repeat.size());
  s.mean = std::accumulate(s.per_repeat.begin(), s.per_repeat.end(), 0.0) / n;
  if (s.per_repeat.size() > 1) {
    double ss = 0;
    for (double v : s.per_repeat) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1));
  }
  return s;
}

// Repeat r scores the predictions on a stratified subset: within every class
// the sample indices are shuffled with Rng(mix(seed, r)) and the first
// max(1, floor(n_c * fraction)) are kept.
inline AccuracySummary repeated_accuracy(std::span<const int> predictions, std::span<const int> labels, int repeats,
                                         std::uint64_t seed, double fraction = 0.5) {
  if (repeats < 1) throw UsageError("repeats must be at least 1");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("split fraction must be in (0, 1]");
  if (predictions.size() != labels.size() || labels.empty())
    throw ParameterError("predictions and labels must be non-empty and equally long");
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

  std::vector<double> acc;
  for (int r = 0; r < repeats; ++r) {
    Rng rng(seed ^ (static_cast<std::uint64_t>(r) * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL));
    std::size_t correct = 0, total = 0;
    for (auto members : by_class) {
      if (members.empty()) continue;
      rng.shuffle(std::span<std::size_t>(members));
      const std::size_t keep =
          std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(members.size() * fraction)));
      for (std::size_t k = 0; k < keep; ++k) {
        correct += predictions[members[k]] == labels[members[k]];
        ++total;
      }
    }
    acc.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(total));
  }
  return summarize(std::move(acc));
}

}  // namespace tinybatt

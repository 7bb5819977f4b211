// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Desk-scale fixtures: the "deepfish-tiny" reference network with seeded
// weights, synthetic underwater scenes (with and without a fish) and the
// 625-path reference search space.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tinybatt/arch_select.hpp"
#include "tinybatt/engine_float.hpp"
#include "tinybatt/model_ir.hpp"
#include "tinybatt/numeric.hpp"
#include "tinybatt/preprocess.hpp"

namespace tinybatt::fixtures {

inline constexpr std::uint64_t kWeightSeed = 2026;
inline constexpr std::uint64_t kSceneSeed = 1;
inline constexpr int kSceneWidth = 64;
inline constexpr int kSceneHeight = 48;

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  return seed ^ (index * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
}

// 32x32x1 input, stem conv, four inverted-residual blocks, pool, fc, argmax.
inline ModelGraph deepfish_tiny_graph() {
  GraphBuilder b("deepfish-tiny", {32, 32, 1});
  std::string x = b.conv2d("stem", "input", 8, 3, 1);
  x = b.relu6("stem_relu", x);
  x = b.inverted_residual("block1", x, {8, 16, 3, 3, 2});
  x = b.inverted_residual("block2", x, {16, 16, 3, 3, 1});
  x = b.inverted_residual("block3", x, {16, 24, 5, 3, 2});
  x = b.inverted_residual("block4", x, {24, 24, 3, 6, 1});
  x = b.global_avg_pool("pool", x);
  x = b.fully_connected("fc", x, 2);
  b.argmax_head("argmax", x);
  return std::move(b).build(2);
}

// He-uniform weights (bound sqrt(6 / fan_in)) and small uniform biases,
// drawn layer by layer in declaration order from one seeded stream.
inline WeightStore init_weights(const ModelGraph& g, std::uint64_t seed) {
  Rng rng(seed);
  WeightStore w;
  for (const auto& l : g.layers) {
    if (!l.has_parameters()) continue;
    double fan_in = 1;
    switch (l.kind) {
      case OpKind::conv2d: fan_in = static_cast<double>(l.kernel * l.kernel * l.in_channels); break;
      case OpKind::depthwise_conv2d: fan_in = static_cast<double>(l.kernel * l.kernel); break;
      default: fan_in = static_cast<double>(l.in_channels); break;
    }
    const double bound = std::sqrt(6.0 / fan_in);
    auto& weights = w[l.weight_name()];
    weights.resize(weight_count(l));
    for (auto& v : weights) v = static_cast<float>(rng.uniform(-bound, bound));
    auto& bias = w[l.bias_name()];
    bias.resize(bias_count(l));
    for (auto& v : bias) v = static_cast<float>(rng.uniform(-0.1, 0.1));
  }
  return w;
}

// Synthetic RGB scene: a blue-green water gradient with sensor noise and a
// few dark rocks; with `fish` set, a bright elliptical body with a tail.
inline RawImage synthetic_scene(std::uint64_t seed, std::uint64_t index, bool fish) {
  Rng rng(mix_seed(seed, index));
  RawImage img{kSceneWidth, kSceneHeight, std::vector<std::uint8_t>(kSceneWidth * kSceneHeight * 3)};
  const double base_r = rng.uniform(10, 40), base_g = rng.uniform(70, 130), base_b = rng.uniform(100, 170);
  const double fade = rng.uniform(0.3, 0.7);
  struct Blob { double cx, cy, rx, ry; double r, g, b; };
  std::vector<Blob> blobs;
  const int rocks = static_cast<int>(rng.below(3));
  for (int i = 0; i < rocks; ++i)
    blobs.push_back({rng.uniform(0, kSceneWidth), rng.uniform(kSceneHeight * 0.6, kSceneHeight), rng.uniform(4, 12),
                     rng.uniform(3, 8), rng.uniform(5, 30), rng.uniform(20, 50), rng.uniform(20, 60)});
  Blob body{};
  bool facing_left = false;
  if (fish) {
    body = {rng.uniform(14, kSceneWidth - 14), rng.uniform(10, kSceneHeight - 10), rng.uniform(6, 13),
            rng.uniform(3, 6), rng.uniform(160, 250), rng.uniform(150, 230), rng.uniform(120, 200)};
    facing_left = rng.below(2) == 1;
  }
  for (int y = 0; y < kSceneHeight; ++y) {
    const double depth = 1.0 - fade * y / kSceneHeight;
    for (int x = 0; x < kSceneWidth; ++x) {
      double r = base_r * depth, g = base_g * depth, b = base_b * depth;
      for (const auto& blob : blobs) {
        const double dx = (x - blob.cx) / blob.rx, dy = (y - blob.cy) / blob.ry;
        if (dx * dx + dy * dy <= 1.0) r = blob.r, g = blob.g, b = blob.b;
      }
      if (fish) {
        const double dx = (x - body.cx) / body.rx, dy = (y - body.cy) / body.ry;
        // Tail: a triangle behind the body.
        const double tx = facing_left ? (x - (body.cx + body.rx)) : ((body.cx - body.rx) - x);
        const bool tail = tx >= 0 && tx <= body.rx * 0.6 && std::fabs(y - body.cy) <= tx * 0.9 + 1;
        if (dx * dx + dy * dy <= 1.0 || tail) r = body.r, g = body.g, b = body.b;
      }
      const double noise = rng.uniform(-12, 12);
      auto* px = &img.data[(static_cast<std::size_t>(y) * kSceneWidth + x) * 3];
      px[0] = static_cast<std::uint8_t>(std::clamp(std::round(r + noise), 0.0, 255.0));
      px[1] = static_cast<std::uint8_t>(std::clamp(std::round(g + noise), 0.0, 255.0));
      px[2] = static_cast<std::uint8_t>(std::clamp(std::round(b + noise), 0.0, 255.0));
    }
  }
  return img;
}

// Fixture input #index: odd indices contain a fish.
inline std::vector<float> fixture_input(std::uint64_t index, std::uint64_t seed = kSceneSeed) {
  return preprocess_image(synthetic_scene(seed, index, index % 2 == 1)).tensor;
}

inline std::vector<std::vector<float>> fixture_inputs(std::uint64_t first, std::size_t count,
                                                      std::uint64_t seed = kSceneSeed) {
  std::vector<std::vector<float>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(fixture_input(first + i, seed));
  return out;
}

// Shifts the fc biases so the median logit margin over `inputs` is zero,
// giving a random-weight classifier that splits its inputs between the two
// classes.
inline void center_two_class_head(const ModelGraph& g, WeightStore& w, std::span<const std::vector<float>> inputs) {
  std::vector<double> margin;
  for (const auto& x : inputs) {
    const auto logits = run_float(g, w, x);
    margin.push_back(static_cast<double>(logits[1]) - logits[0]);
  }
  std::sort(margin.begin(), margin.end());
  const std::size_t n = margin.size();
  const double median = n % 2 ? margin[n / 2] : 0.5 * (margin[n / 2 - 1] + margin[n / 2]);
  auto& bias = w.at("fc.bias");
  bias[0] = static_cast<float>(bias[0] + median / 2);
  bias[1] = static_cast<float>(bias[1] - median / 2);
}

struct FloatModel {
  ModelGraph graph;
  WeightStore weights;
};

inline FloatModel deepfish_tiny(std::uint64_t seed = kWeightSeed) {
  FloatModel m{deepfish_tiny_graph(), {}};
  m.weights = init_weights(m.graph, seed);
  const auto calib = fixture_inputs(0, 64);
  center_two_class_head(m.graph, m.weights, calib);
  return m;
}

// Stem conv 3x3 stride 2 to 16 channels, then four 16->16 stride-1
// positions offering k3e3, k5e3, k3e6, k5e6 or an identity skip.
inline SearchSpace reference_search_space() {
  SearchSpace s;
  s.input = {32, 32, 1};
  s.stem_channels = 16;
  s.stem_kernel = 3;
  s.stem_stride = 2;
  s.classes = 2;
  for (int i = 0; i < 4; ++i) {
    BlockPosition p;
    p.out_channels = 16;
    p.stride = 1;
    p.candidates = {{3, 3, false}, {5, 3, false}, {3, 6, false}, {5, 6, false}, {0, 0, true}};
    s.positions.push_back(p);
  }
  return s;
}

}  // namespace tinybatt::fixtures

// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls the library routine it is checking.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "tinybatt/tinybatt.hpp"
#include "tinybatt/fixtures.hpp"

namespace tinybatt::oracle {

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(TINYBATT_SOURCE_DIR) / rel;
}

inline std::filesystem::path support_path(const std::string& rel) {
  return std::filesystem::path(TINYBATT_SUPPORT_DIR) / rel;
}

// Random valid graph with at most `max_layers` layers: a chain of conv,
// depthwise, relu6, pool and residual adds whose inputs are sometimes taken
// from earlier tensors, so several buffers can be live at once. Tensors left
// unconsumed are folded into the output through fc + add.
inline ModelGraph random_graph(Rng& rng, std::size_t max_layers = 12) {
  static const Shape kInputs[] = {{8, 8, 1}, {6, 6, 2}, {5, 7, 3}, {9, 4, 2}};
  for (;;) {
    const Shape in_shape = kInputs[rng.below(4)];
    GraphBuilder b("random", in_shape);
    std::vector<std::pair<std::string, Shape>> tensors{{"input", in_shape}};
    std::set<std::string> unconsumed{"input"};
    std::size_t layers = 0;
    const std::size_t body = 1 + rng.below(max_layers - 1);
    auto use = [&](const std::string& t) { unconsumed.erase(t); };
    auto produce = [&](const std::string& t, Shape s) {
      tensors.emplace_back(t, s);
      unconsumed.insert(t);
      ++layers;
    };
    for (std::size_t i = 0; i < body; ++i) {
      const std::string name = "l" + std::to_string(i);
      const auto& [src, shape] = rng.uniform() < 0.65 ? tensors.back() : tensors[rng.below(tensors.size())];
      const std::string x = src;
      const Shape s = shape;
      const int op = static_cast<int>(rng.below(5));
      if (op == 0) {
        const int k = rng.below(2) ? 3 : 1;
        const int stride = static_cast<int>(1 + rng.below(2));
        const int oc = static_cast<int>(1 + rng.below(6));
        b.conv2d(name, x, oc, k, stride);
        use(x);
        produce(name, {(s.height + stride - 1) / stride, (s.width + stride - 1) / stride, oc});
      } else if (op == 1) {
        const int stride = static_cast<int>(1 + rng.below(2));
        b.depthwise_conv2d(name, x, 3, stride);
        use(x);
        produce(name, {(s.height + stride - 1) / stride, (s.width + stride - 1) / stride, s.channels});
      } else if (op == 2) {
        b.relu6(name, x);
        use(x);
        produce(name, s);
      } else if (op == 3 && s.height > 1) {
        b.global_avg_pool(name, x);
        use(x);
        produce(name, {1, 1, s.channels});
      } else {
        std::vector<std::string> same;
        for (const auto& [t, ts] : tensors)
          if (ts == s && t != x) same.push_back(t);
        if (same.empty()) {
          b.relu6(name, x);
          use(x);
          produce(name, s);
        } else {
          const std::string y = same[rng.below(same.size())];
          b.residual_add(name, x, y);
          use(x);
          use(y);
          produce(name, s);
        }
      }
    }
    // The last tensor is the output; fold every other unconsumed tensor into it.
    std::vector<std::string> loose(unconsumed.begin(), unconsumed.end());
    if (loose.size() > 1) {
      if (layers + 2 * loose.size() - 1 > max_layers) continue;
      std::string acc;
      for (std::size_t i = 0; i < loose.size(); ++i) {
        const std::string fc = "fold_fc" + std::to_string(i);
        b.fully_connected(fc, loose[i], 3);
        if (i == 0) {
          acc = fc;
        } else {
          const std::string add = "fold_add" + std::to_string(i);
          b.residual_add(add, acc, fc);
          acc = add;
        }
      }
    }
    return std::move(b).build(0);
  }
}

// Peak live bytes by direct simulation: at each step, sum the bytes of every
// tensor that has been produced and is still needed at or after that step.
inline std::size_t brute_force_ram_peak(const ModelGraph& g) {
  if (g.layers.empty()) return 0;
  const std::size_t steps = g.schedule.size();
  std::map<std::string, std::size_t> produced_at{{g.input, 0}};
  std::map<std::string, std::size_t> last_use;
  for (std::size_t s = 0; s < steps; ++s) {
    const Layer& l = g.layers[g.schedule[s]];
    produced_at[l.output] = s;
    for (const auto& in : l.inputs) last_use[in] = s;
  }
  std::size_t peak = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    std::size_t live = 0;
    for (const auto& [name, first] : produced_at) {
      const bool needed = name == g.output || (last_use.contains(name) && last_use.at(name) >= s) || first == s;
      if (first <= s && needed) live += g.tensor(name).bytes();
    }
    peak = std::max(peak, live);
  }
  return peak;
}

// Exhaustive selection with the stated rule, written as a plain scan.
inline std::optional<std::size_t> brute_force_select(std::span<const ArchCandidate> all, double flash_kb,
                                                     double ram_kb) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& c = all[i].cost;
    if (c.flash_kb > flash_kb || c.ram_kb > ram_kb) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = all[*best].cost;
    const bool better = c.time_ms < b.time_ms || (c.time_ms == b.time_ms && c.flash_kb < b.flash_kb) ||
                        (c.time_ms == b.time_ms && c.flash_kb == b.flash_kb && all[i].path < all[*best].path);
    if (better) best = i;
  }
  return best;
}

// Copies every activation of every forward pass and takes min/max over the
// copies afterwards, with no incremental merging.
inline std::map<std::string, Range> replay_ranges(const ModelGraph& g, const WeightStore& w,
                                                  std::span<const std::vector<float>> inputs) {
  std::map<std::string, Range> out;
  for (const auto& x : inputs) {
    std::map<std::string, std::vector<float>> acts;
    run_float(g, w, x, [&acts](const std::string& name, std::span<const float> v) {
      acts[name].assign(v.begin(), v.end());
    });
    for (const auto& [name, v] : acts) {
      double lo = v[0], hi = v[0];
      for (float f : v) lo = std::min<double>(lo, f), hi = std::max<double>(hi, f);
      auto it = out.find(name);
      if (it == out.end()) out[name] = {lo, hi};
      else it->second = {std::min(it->second.min, lo), std::max(it->second.max, hi)};
    }
  }
  return out;
}

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("tinybatt-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& rel) const { return path / rel; }
};

inline bool have_c_compiler() { return std::system("command -v cc >/dev/null 2>&1") == 0; }

}  // namespace tinybatt::oracle

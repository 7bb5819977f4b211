// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Activation liveness over a fixed schedule, peak RAM, and placement of
// activation buffers inside a single static arena.

#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "tinybatt/error.hpp"
#include "tinybatt/model_ir.hpp"

namespace tinybatt {

struct TensorLifetime {
  std::string name;
  std::size_t bytes = 0;
  std::size_t first = 0;  // schedule step that produces it (0 for the graph input)
  std::size_t last = 0;   // last schedule step that reads it

  bool overlaps(const TensorLifetime& o) const { return first <= o.last && o.first <= last; }
};

// A tensor is live from the step producing it through its last consumer.
// The graph output stays live to the final step.
inline std::vector<TensorLifetime> tensor_lifetimes(const ModelGraph& g) {
  std::vector<TensorLifetime> out;
  if (g.layers.empty()) return out;
  if (g.schedule.size() != g.layers.size()) throw EstimatorError("graph has no schedule; run infer_shapes first");
  std::map<std::string, std::size_t> index;
  auto touch = [&](const std::string& name, std::size_t step, bool produce) {
    auto it = index.find(name);
    if (it == index.end()) {
      const auto& t = g.tensor(name);
      if (!t.shape.resolved()) throw EstimatorError("tensor '" + name + "' has an unresolved shape");
      it = index.emplace(name, out.size()).first;
      out.push_back({name, t.bytes(), step, step});
    }
    auto& lt = out[it->second];
    if (produce) lt.first = step;
    lt.last = std::max(lt.last, step);
  };
  touch(g.input, 0, true);
  for (std::size_t step = 0; step < g.schedule.size(); ++step) {
    const Layer& l = g.layers[g.schedule[step]];
    for (const auto& in : l.inputs) touch(in, step, false);
    touch(l.output, step, true);
  }
  if (auto it = index.find(g.output); it != index.end()) out[it->second].last = g.schedule.size() - 1;
  return out;
}

inline std::size_t ram_peak(const ModelGraph& g) {
  const auto lifetimes = tensor_lifetimes(g);
  // Sweep: +bytes at first, -bytes after last.
  std::vector<long long> delta(g.schedule.size() + 1, 0);
  for (const auto& lt : lifetimes) {
    delta[lt.first] += static_cast<long long>(lt.bytes);
    delta[lt.last + 1] -= static_cast<long long>(lt.bytes);
  }
  long long live = 0, peak = 0;
  for (std::size_t i = 0; i < g.schedule.size(); ++i) {
    live += delta[i];
    peak = std::max(peak, live);
  }
  return static_cast<std::size_t>(peak);
}

struct ArenaPlan {
  std::size_t size = 0;
  std::map<std::string, std::size_t> offsets;
};

namespace detail {

struct Placement {
  const std::vector<TensorLifetime>& tensors;
  std::vector<std::size_t> order;
  std::vector<std::size_t> offset;
  std::vector<bool> placed;
  std::size_t limit = 0;
  std::size_t budget = 0;  // remaining search nodes

  bool fits(std::size_t i, std::size_t off) const {
    if (off + tensors[i].bytes > limit) return false;
    for (std::size_t j = 0; j < tensors.size(); ++j) {
      if (!placed[j] || !tensors[i].overlaps(tensors[j])) continue;
      if (off < offset[j] + tensors[j].bytes && offset[j] < off + tensors[i].bytes) return false;
    }
    return true;
  }

  std::vector<std::size_t> candidates(std::size_t i) const {
    std::vector<std::size_t> c{0};
    for (std::size_t j = 0; j < tensors.size(); ++j)
      if (placed[j] && tensors[i].overlaps(tensors[j])) c.push_back(offset[j] + tensors[j].bytes);
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
  }

  bool search(std::size_t depth) {
    if (depth == order.size()) return true;
    if (budget == 0) return false;
    --budget;
    const std::size_t i = order[depth];
    for (std::size_t off : candidates(i)) {
      if (!fits(i, off)) continue;
      offset[i] = off;
      placed[i] = true;
      if (search(depth + 1)) return true;
      placed[i] = false;
    }
    return false;
  }
};

}  // namespace detail

// Assigns arena offsets so that tensors with overlapping lifetimes never
// share bytes. Tries to reach the peak-liveness lower bound with a bounded
// backtracking search and falls back to greedy first-fit by size.
inline ArenaPlan plan_arena(const ModelGraph& g, std::size_t search_budget = 200000) {
  const auto tensors = tensor_lifetimes(g);
  ArenaPlan plan;
  if (tensors.empty()) return plan;
  const std::size_t peak = ram_peak(g);

  detail::Placement p{tensors, {}, std::vector<std::size_t>(tensors.size(), 0),
                      std::vector<bool>(tensors.size(), false), peak, search_budget};
  p.order.resize(tensors.size());
  std::iota(p.order.begin(), p.order.end(), 0);
  std::stable_sort(p.order.begin(), p.order.end(), [&](std::size_t a, std::size_t b) {
    if (tensors[a].first != tensors[b].first) return tensors[a].first < tensors[b].first;
    return tensors[a].bytes > tensors[b].bytes;
  });

  if (!p.search(0)) {
    // Greedy: largest first, lowest feasible offset.
    std::stable_sort(p.order.begin(), p.order.end(),
                     [&](std::size_t a, std::size_t b) { return tensors[a].bytes > tensors[b].bytes; });
    std::fill(p.placed.begin(), p.placed.end(), false);
    p.limit = static_cast<std::size_t>(-1) / 2;
    for (std::size_t i : p.order) {
      for (std::size_t off : p.candidates(i)) {
        if (p.fits(i, off)) {
          p.offset[i] = off;
          break;
        }
      }
      p.placed[i] = true;
    }
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    plan.offsets[tensors[i].name] = p.offset[i];
    plan.size = std::max(plan.size, p.offset[i] + tensors[i].bytes);
  }
  return plan;
}

}  // namespace tinybatt

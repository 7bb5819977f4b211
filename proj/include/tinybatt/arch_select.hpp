// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Hardware-aware architecture selection over an over-parameterized
// inverted-residual search space. Each block position holds several
// candidate operations; a concrete architecture keeps exactly one per
// position. Selection is exhaustive for small spaces and gate-sampled
// (one path per draw) for large ones, with the estimator as objective.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tinybatt/error.hpp"
#include "tinybatt/estimator.hpp"
#include "tinybatt/model_ir.hpp"
#include "tinybatt/numeric.hpp"

namespace tinybatt {

struct BlockCandidate {
  int kernel = 3;
  int expansion = 3;
  bool skip = false;

  std::string label() const {
    return skip ? "skip" : "k" + std::to_string(kernel) + "e" + std::to_string(expansion);
  }
  static BlockCandidate parse(std::string_view s) {
    if (s == "skip") return {0, 0, true};
    if (s.size() == 4 && s[0] == 'k' && s[2] == 'e') return {s[1] - '0', s[3] - '0', false};
    throw ParameterError("bad block candidate '" + std::string(s) + "' (expected kXeY or skip)");
  }
};

struct BlockPosition {
  int out_channels = 16;
  int stride = 1;
  std::vector<BlockCandidate> candidates;
};

struct SearchSpace {
  Shape input{32, 32, 1};
  int stem_channels = 16;
  int stem_kernel = 3;
  int stem_stride = 1;
  int classes = 2;
  std::vector<BlockPosition> positions;
  std::uint64_t cap = 1'000'000;

  // Channel count entering position i.
  int in_channels(std::size_t i) const { return i == 0 ? stem_channels : positions[i - 1].out_channels; }

  void validate() const {
    if (positions.empty()) throw ParameterError("search space has no block positions");
    for (std::size_t i = 0; i < positions.size(); ++i) {
      const auto& p = positions[i];
      if (p.candidates.empty()) throw ParameterError("position " + std::to_string(i) + " has no candidates");
      for (const auto& c : p.candidates) {
        if (c.skip) {
          if (p.stride != 1 || in_channels(i) != p.out_channels)
            throw ParameterError("identity skip at position " + std::to_string(i) +
                                 " requires stride 1 and matching channels");
        } else if ((c.kernel != 3 && c.kernel != 5 && c.kernel != 7) || (c.expansion != 3 && c.expansion != 6)) {
          throw ParameterError("candidate " + c.label() + " at position " + std::to_string(i) +
                               " outside kernel {3,5,7} x expansion {3,6}");
        }
      }
    }
  }

  std::uint64_t combinations() const {
    std::uint64_t n = 1;
    for (const auto& p : positions) {
      if (n > std::numeric_limits<std::uint64_t>::max() / p.candidates.size())
        return std::numeric_limits<std::uint64_t>::max();
      n *= p.candidates.size();
    }
    return n;
  }
};

inline SearchSpace search_space_from_json(const nlohmann::json& j) {
  SearchSpace s;
  const auto in = j.at("input").get<std::vector<int>>();
  if (in.size() != 3) throw ParameterError("search space input must be [height, width, channels]");
  s.input = {in[0], in[1], in[2]};
  const auto& stem = j.at("stem");
  s.stem_channels = stem.at("channels").get<int>();
  s.stem_kernel = stem.value("kernel", 3);
  s.stem_stride = stem.value("stride", 1);
  s.classes = j.at("classes").get<int>();
  s.cap = j.value("cap", s.cap);
  for (const auto& pj : j.at("positions")) {
    BlockPosition p;
    p.out_channels = pj.at("out_channels").get<int>();
    p.stride = pj.value("stride", 1);
    for (const auto& c : pj.at("candidates")) p.candidates.push_back(BlockCandidate::parse(c.get<std::string>()));
    s.positions.push_back(std::move(p));
  }
  s.validate();
  return s;
}

inline nlohmann::json to_json(const SearchSpace& s) {
  nlohmann::json positions = nlohmann::json::array();
  for (const auto& p : s.positions) {
    std::vector<std::string> c;
    for (const auto& cand : p.candidates) c.push_back(cand.label());
    positions.push_back({{"out_channels", p.out_channels}, {"stride", p.stride}, {"candidates", c}});
  }
  return {{"input", {s.input.height, s.input.width, s.input.channels}},
          {"stem", {{"channels", s.stem_channels}, {"kernel", s.stem_kernel}, {"stride", s.stem_stride}}},
          {"classes", s.classes},
          {"positions", positions},
          {"cap", s.cap}};
}

using ArchPath = std::vector<std::size_t>;

struct ArchCandidate {
  ArchPath path;
  ModelGraph graph;
  FootprintReport cost;

  std::string label(const SearchSpace& s) const {
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (i) out += "-";
      out += s.positions[i].candidates[path[i]].label();
    }
    return out;
  }
};

// Stem conv + relu6, one block (or nothing, for skip) per position, then
// global_avg_pool, fully_connected and argmax.
inline ModelGraph realize_path(const SearchSpace& s, const ArchPath& path) {
  if (path.size() != s.positions.size()) throw ParameterError("path length does not match position count");
  GraphBuilder b("arch", s.input);
  std::string x = b.conv2d("stem", "input", s.stem_channels, s.stem_kernel, s.stem_stride);
  x = b.relu6("stem_relu", x);
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto& pos = s.positions[i];
    if (path[i] >= pos.candidates.size()) throw ParameterError("path index out of range at position " + std::to_string(i));
    const auto& c = pos.candidates[path[i]];
    if (c.skip) continue;
    x = b.inverted_residual("p" + std::to_string(i), x,
                            BlockSpec{s.in_channels(i), pos.out_channels, c.kernel, c.expansion, pos.stride});
  }
  x = b.global_avg_pool("pool", x);
  x = b.fully_connected("fc", x, s.classes);
  b.argmax_head("argmax", x);
  return std::move(b).build(s.classes);
}

inline ArchCandidate evaluate_path(const SearchSpace& s, const ArchPath& path, const DeviceProfile& profile) {
  ArchCandidate c{path, realize_path(s, path), {}};
  c.cost = estimate(c.graph, ElementType::int8, profile);
  return c;
}

// Combination index -> path; position 0 is the most significant digit so
// index order is lexicographic path order.
inline ArchPath path_at(const SearchSpace& s, std::uint64_t index) {
  ArchPath path(s.positions.size());
  for (std::size_t i = s.positions.size(); i-- > 0;) {
    const std::uint64_t n = s.positions[i].candidates.size();
    path[i] = static_cast<std::size_t>(index % n);
    index /= n;
  }
  return path;
}

inline std::size_t parameter_count(const ModelGraph& g) {
  std::size_t n = 0;
  for (const auto& l : g.layers) n += weight_count(l) + bias_count(l);
  return n;
}

// Parameters of the whole over-parameterized network: every candidate at
// every position materialized at once.
inline std::size_t supernet_parameter_count(const SearchSpace& s) {
  // Stem and head are shared by every path.
  const auto stem_c = static_cast<std::size_t>(s.stem_channels);
  const auto last_c = static_cast<std::size_t>(s.positions.back().out_channels);
  const auto classes = static_cast<std::size_t>(s.classes);
  std::size_t n = static_cast<std::size_t>(s.stem_kernel * s.stem_kernel * s.input.channels) * stem_c + stem_c;
  n += last_c * classes + classes;
  for (std::size_t i = 0; i < s.positions.size(); ++i) {
    const auto& pos = s.positions[i];
    for (const auto& c : pos.candidates) {
      if (c.skip) continue;
      for (const auto& l : build_inverted_residual(
               BlockSpec{s.in_channels(i), pos.out_channels, c.kernel, c.expansion, pos.stride}, "x", "p"))
        n += weight_count(l) + bias_count(l);
    }
  }
  return n;
}

// Calls `visit` for every path in lexicographic order.
inline void enumerate_space(const SearchSpace& s, const DeviceProfile& profile,
                            const std::function<void(const ArchCandidate&)>& visit) {
  s.validate();
  const std::uint64_t total = s.combinations();
  if (total > s.cap)
    throw CapacityError("search space has " + std::to_string(total) + " combinations, above the cap of " +
                        std::to_string(s.cap) + "; use gate sampling instead");
  for (std::uint64_t i = 0; i < total; ++i) visit(evaluate_path(s, path_at(s, i), profile));
}

inline std::vector<ArchCandidate> enumerate_space(const SearchSpace& s, const DeviceProfile& profile) {
  std::vector<ArchCandidate> out;
  enumerate_space(s, profile, [&](const ArchCandidate& c) { out.push_back(c); });
  return out;
}

// Cost of every path, evaluated in parallel and returned in index order.
inline std::vector<ArchCandidate> evaluate_space(const SearchSpace& s, const DeviceProfile& profile,
                                                 unsigned workers = 0) {
  s.validate();
  const std::uint64_t total = s.combinations();
  if (total > s.cap)
    throw CapacityError("search space has " + std::to_string(total) + " combinations, above the cap of " +
                        std::to_string(s.cap) + "; use gate sampling instead");
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, total));
  std::vector<ArchCandidate> out(total);
  {
    std::vector<std::jthread> threads;
    for (unsigned w = 0; w < workers; ++w)
      threads.emplace_back([&, w] {
        for (std::uint64_t i = w; i < total; i += workers) out[i] = evaluate_path(s, path_at(s, i), profile);
      });
  }
  return out;
}

inline bool within_budget(const FootprintReport& r, double flash_budget_kb, double ram_budget_kb) {
  return r.flash_kb <= flash_budget_kb && r.ram_kb <= ram_budget_kb;
}

// Strict ordering used by selection: latency, then flash, then path.
inline bool better_candidate(const ArchCandidate& a, const ArchCandidate& b) {
  if (a.cost.time_ms != b.cost.time_ms) return a.cost.time_ms < b.cost.time_ms;
  if (a.cost.flash_kb != b.cost.flash_kb) return a.cost.flash_kb < b.cost.flash_kb;
  return a.path < b.path;
}

inline ArchCandidate select_best(std::span<const ArchCandidate> candidates, const SearchSpace& s,
                                 double flash_budget_kb, double ram_budget_kb) {
  if (!(flash_budget_kb > 0) || !(ram_budget_kb > 0)) throw ParameterError("budgets must be positive");
  const ArchCandidate* best = nullptr;
  const ArchCandidate* smallest = nullptr;
  for (const auto& c : candidates) {
    if (!smallest || c.cost.flash_kb + c.cost.ram_kb < smallest->cost.flash_kb + smallest->cost.ram_kb) smallest = &c;
    if (!within_budget(c.cost, flash_budget_kb, ram_budget_kb)) continue;
    if (!best || better_candidate(c, *best)) best = &c;
  }
  if (!best) {
    std::string msg = "no candidate fits flash <= " + std::to_string(flash_budget_kb) + " KB and ram <= " +
                      std::to_string(ram_budget_kb) + " KB";
    if (smallest)
      msg += "; smallest footprint is " + smallest->label(s) + " (flash " + std::to_string(smallest->cost.flash_kb) +
             " KB, ram " + std::to_string(smallest->cost.ram_kb) + " KB)";
    throw InfeasibleError(msg);
  }
  return *best;
}

inline ArchCandidate select_best(const SearchSpace& s, double flash_budget_kb, double ram_budget_kb,
                                 const DeviceProfile& profile) {
  const auto all = evaluate_space(s, profile);
  return select_best(std::span<const ArchCandidate>(all), s, flash_budget_kb, ram_budget_kb);
}

// Per position, a probability distribution over that position's candidates.
using GateVector = std::vector<std::vector<double>>;

inline void validate_gates(const SearchSpace& s, const GateVector& gates) {
  if (gates.size() != s.positions.size()) throw ParameterError("gate vector length does not match position count");
  for (std::size_t i = 0; i < gates.size(); ++i) {
    if (gates[i].size() != s.positions[i].candidates.size())
      throw ParameterError("gate vector at position " + std::to_string(i) + " has the wrong candidate count");
    double sum = 0.0;
    for (double p : gates[i]) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw ParameterError("gate probabilities must be non-negative");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw ParameterError("gate probabilities at position " + std::to_string(i) + " do not sum to 1");
  }
}

inline GateVector uniform_gates(const SearchSpace& s) {
  GateVector g;
  for (const auto& p : s.positions) g.emplace_back(p.candidates.size(), 1.0 / static_cast<double>(p.candidates.size()));
  return g;
}

// Draws one candidate per position from the gate distribution (one uniform
// draw per position, inverse-CDF) and realizes only that path.
inline ArchPath sample_path(const SearchSpace& s, const GateVector& gates, std::uint64_t seed) {
  validate_gates(s, gates);
  Rng rng(seed);
  ArchPath path(s.positions.size());
  for (std::size_t i = 0; i < gates.size(); ++i) {
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t pick = gates[i].size();
    for (std::size_t c = 0; c < gates[i].size(); ++c) {
      cum += gates[i][c];
      if (u < cum) {
        pick = c;
        break;
      }
    }
    if (pick == gates[i].size()) {
      // u landed in the rounding slack above the last cumulative sum.
      for (std::size_t c = gates[i].size(); c-- > 0;)
        if (gates[i][c] > 0.0) {
          pick = c;
          break;
        }
    }
    path[i] = pick;
  }
  return path;
}

inline ArchCandidate sample_one_path(const SearchSpace& s, const GateVector& gates, std::uint64_t seed,
                                     const DeviceProfile& profile = {}) {
  return evaluate_path(s, sample_path(s, gates, seed), profile);
}

}  // namespace tinybatt

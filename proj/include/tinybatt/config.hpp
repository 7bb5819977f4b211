// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Pipeline configuration shared by every CLI command. A config file is JSON
// with the same field names as `to_json` writes; absent fields keep their
// defaults, unknown fields are rejected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "tinybatt/error.hpp"
#include "tinybatt/estimator.hpp"
#include "tinybatt/preprocess.hpp"

namespace tinybatt {

struct QuantizationOptions {
  std::string statistic = "minmax";
  std::string granularity = "per_tensor";

  void validate() const {
    if (statistic != "minmax")
      throw UsageError("unsupported calibration statistic '" + statistic + "' (only minmax is implemented)");
    if (granularity != "per_tensor")
      throw UsageError("unsupported quantization granularity '" + granularity + "' (only per_tensor is implemented)");
  }
};

struct SearchOptions {
  std::string space;  // search-space JSON
  double flash_budget_kb = 64.0;
  double ram_budget_kb = 32.0;
  std::size_t samples = 0;  // 0: exhaustive; otherwise gate-sampled paths
  std::string gates;        // optional gate JSON for sampling; uniform if empty
};

struct Seeds {
  std::uint64_t seed = 1;          // evaluation splits and gate sampling
  std::uint64_t weight_seed = 2026;  // weights of models realized by `search`
  std::uint64_t golden_seed = 7;
};

struct PipelineConfig {
  std::string model;           // model manifest
  std::string weights_blob;    // optional; must match the manifest's blob when set
  std::string calibration_dir;
  std::string output_dir = "out";
  DeviceProfile profile = DeviceProfile::int8_default();
  DeviceProfile real32_profile = DeviceProfile::real32_default();
  QuantizationOptions quantization;
  SearchOptions search;
  Seeds seeds;
  ChannelMode channel = ChannelMode::luma;
  int repeats = 10;
  double split_fraction = 0.5;
  unsigned workers = 0;  // 0: hardware concurrency
  std::size_t golden_count = 64;
  std::size_t arena_cap = 256 * 1024;

  void validate() const {
    profile.validate();
    real32_profile.validate();
    quantization.validate();
    if (repeats < 1) throw UsageError("repeats must be at least 1");
    if (!(split_fraction > 0.0 && split_fraction <= 1.0)) throw UsageError("split_fraction must be in (0, 1]");
    if (!(search.flash_budget_kb > 0) || !(search.ram_budget_kb > 0)) throw UsageError("search budgets must be positive");
    if (golden_count < 1) throw UsageError("golden_count must be at least 1");
    namespace fs = std::filesystem;
    for (const auto* p : {&model, &weights_blob, &calibration_dir, &search.space, &search.gates})
      if (!p->empty() && !fs::exists(*p)) throw UsageError("configured path '" + *p + "' does not exist");
  }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {{"model", c.model},
          {"weights_blob", c.weights_blob},
          {"calibration_dir", c.calibration_dir},
          {"output_dir", c.output_dir},
          {"profile", to_json(c.profile)},
          {"real32_profile", to_json(c.real32_profile)},
          {"quantization", {{"statistic", c.quantization.statistic}, {"granularity", c.quantization.granularity}}},
          {"search",
           {{"space", c.search.space},
            {"flash_budget_kb", c.search.flash_budget_kb},
            {"ram_budget_kb", c.search.ram_budget_kb},
            {"samples", c.search.samples},
            {"gates", c.search.gates}}},
          {"seeds", {{"seed", c.seeds.seed}, {"weight_seed", c.seeds.weight_seed}, {"golden_seed", c.seeds.golden_seed}}},
          {"channel", std::string(to_string(c.channel))},
          {"repeats", c.repeats},
          {"split_fraction", c.split_fraction},
          {"workers", c.workers},
          {"golden_count", c.golden_count},
          {"arena_cap", c.arena_cap}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw UsageError("config section '" + where + "' must be an object");
  std::set<std::string> names(known.begin(), known.end());
  for (const auto& [k, v] : j.items())
    if (!names.contains(k)) throw UsageError("unknown config field '" + where + k + "'");
}

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  try {
    detail::reject_unknown(j,
                           {"model", "weights_blob", "calibration_dir", "output_dir", "profile", "real32_profile",
                            "quantization", "search", "seeds", "channel", "repeats", "split_fraction", "workers",
                            "golden_count", "arena_cap"},
                           "");
    c.model = j.value("model", c.model);
    c.weights_blob = j.value("weights_blob", c.weights_blob);
    c.calibration_dir = j.value("calibration_dir", c.calibration_dir);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("profile")) c.profile = profile_from_json(j.at("profile"), c.profile);
    if (j.contains("real32_profile")) c.real32_profile = profile_from_json(j.at("real32_profile"), c.real32_profile);
    if (j.contains("quantization")) {
      const auto& q = j.at("quantization");
      detail::reject_unknown(q, {"statistic", "granularity"}, "quantization.");
      c.quantization.statistic = q.value("statistic", c.quantization.statistic);
      c.quantization.granularity = q.value("granularity", c.quantization.granularity);
    }
    if (j.contains("search")) {
      const auto& s = j.at("search");
      detail::reject_unknown(s, {"space", "flash_budget_kb", "ram_budget_kb", "samples", "gates"}, "search.");
      c.search.space = s.value("space", c.search.space);
      c.search.flash_budget_kb = s.value("flash_budget_kb", c.search.flash_budget_kb);
      c.search.ram_budget_kb = s.value("ram_budget_kb", c.search.ram_budget_kb);
      c.search.samples = s.value("samples", c.search.samples);
      c.search.gates = s.value("gates", c.search.gates);
    }
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      detail::reject_unknown(s, {"seed", "weight_seed", "golden_seed"}, "seeds.");
      c.seeds.seed = s.value("seed", c.seeds.seed);
      c.seeds.weight_seed = s.value("weight_seed", c.seeds.weight_seed);
      c.seeds.golden_seed = s.value("golden_seed", c.seeds.golden_seed);
    }
    if (j.contains("channel")) c.channel = parse_channel_mode(j.at("channel").get<std::string>());
    c.repeats = j.value("repeats", c.repeats);
    c.split_fraction = j.value("split_fraction", c.split_fraction);
    c.workers = j.value("workers", c.workers);
    c.golden_count = j.value("golden_count", c.golden_count);
    c.arena_cap = j.value("arena_cap", c.arena_cap);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed config: ") + e.what());
  } catch (const ParameterError& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
  return c;
}

}  // namespace tinybatt

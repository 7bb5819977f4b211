// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Flash / RAM / MAC / latency / power / energy estimates for a model on an
// MCU-class device, and percentage reductions between two reports.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "tinybatt/engine_float.hpp"
#include "tinybatt/error.hpp"
#include "tinybatt/memory_plan.hpp"
#include "tinybatt/model_ir.hpp"
#include "tinybatt/quantizer.hpp"

namespace tinybatt {

inline constexpr std::size_t kLayerMetadataBytes = 64;

struct DeviceProfile {
  double clock_hz = 120e6;
  double macs_per_cycle = 1.0;
  double active_power_mw = 4.83;
  std::size_t code_overhead_bytes = 30 * 1024;
  double supply_voltage_v = 1.9;  // informational

  void validate() const {
    if (!(clock_hz > 0) || !(macs_per_cycle > 0) || !(active_power_mw > 0) || code_overhead_bytes == 0 ||
        !(supply_voltage_v > 0))
      throw ParameterError("device profile fields must all be strictly positive");
  }

  // Profile for the int8 deployment (STM32L4R5-class core at 120 MHz).
  static DeviceProfile int8_default() { return {}; }

  // Profile for the unquantized real32 model on the same core: half the MAC
  // throughput and the original-model active power.
  static DeviceProfile real32_default() {
    DeviceProfile p;
    p.macs_per_cycle = 0.5;
    p.active_power_mw = 13.32;
    return p;
  }
};

struct FootprintReport {
  double flash_kb = 0;
  double ram_kb = 0;
  std::uint64_t macs = 0;
  double time_ms = 0;
  double power_mw = 0;
  double energy_mj = 0;
};

inline nlohmann::json to_json(const FootprintReport& r) {
  return {{"flash_kb", r.flash_kb}, {"ram_kb", r.ram_kb}, {"macs", r.macs},
          {"time_ms", r.time_ms},   {"power_mw", r.power_mw}, {"energy_mj", r.energy_mj}};
}

inline nlohmann::json to_json(const DeviceProfile& p) {
  return {{"clock_hz", p.clock_hz},
          {"macs_per_cycle", p.macs_per_cycle},
          {"active_power_mw", p.active_power_mw},
          {"code_overhead_bytes", p.code_overhead_bytes},
          {"supply_voltage_v", p.supply_voltage_v}};
}

inline DeviceProfile profile_from_json(const nlohmann::json& j, DeviceProfile base = {}) {
  base.clock_hz = j.value("clock_hz", base.clock_hz);
  base.macs_per_cycle = j.value("macs_per_cycle", base.macs_per_cycle);
  base.active_power_mw = j.value("active_power_mw", base.active_power_mw);
  base.code_overhead_bytes = j.value("code_overhead_bytes", base.code_overhead_bytes);
  base.supply_voltage_v = j.value("supply_voltage_v", base.supply_voltage_v);
  base.validate();
  return base;
}

struct MacCount {
  std::vector<std::uint64_t> per_layer;  // parallel to graph.layers
  std::uint64_t total = 0;
  std::uint64_t element_ops = 0;  // relu6 / pool / add / argmax element work
};

inline MacCount count_macs(const ModelGraph& g) {
  MacCount m;
  m.per_layer.resize(g.layers.size(), 0);
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    const Shape out = g.tensor(l.output).shape;
    const Shape in = g.tensor(l.inputs.at(0)).shape;
    if (!out.resolved() || !in.resolved())
      throw EstimatorError("layer '" + l.name + "' has unresolved shapes");
    const std::uint64_t spatial = static_cast<std::uint64_t>(out.height) * out.width;
    const std::uint64_t k2 = static_cast<std::uint64_t>(l.kernel) * l.kernel;
    switch (l.kind) {
      case OpKind::conv2d: m.per_layer[i] = spatial * out.channels * k2 * in.channels; break;
      case OpKind::depthwise_conv2d: m.per_layer[i] = spatial * out.channels * k2; break;
      case OpKind::fully_connected: m.per_layer[i] = in.elements() * out.channels; break;
      default: m.element_ops += in.elements(); break;
    }
    m.total += m.per_layer[i];
  }
  return m;
}

inline std::size_t flash_bytes(std::size_t weight_bytes, std::size_t bias_bytes, std::size_t layers,
                               const DeviceProfile& p) {
  return weight_bytes + bias_bytes + kLayerMetadataBytes * layers + p.code_overhead_bytes;
}

inline std::size_t flash_bytes(const QuantizedModel& qm, const DeviceProfile& p) {
  return flash_bytes(qm.weight_bytes(), qm.bias_bytes(), qm.graph.layers.size(), p);
}

// Flash computed from parameter counts alone. int8 models store int32
// biases; real32 models store real32 weights and biases.
inline std::size_t flash_bytes(const ModelGraph& g, ElementType t, const DeviceProfile& p) {
  std::size_t w = 0, b = 0;
  for (const auto& l : g.layers) {
    w += weight_count(l) * element_bytes(t);
    b += bias_count(l) * 4;
  }
  return flash_bytes(w, b, g.layers.size(), p);
}

inline double estimate_latency(std::uint64_t macs, const DeviceProfile& p) {
  return static_cast<double>(macs) / (p.clock_hz * p.macs_per_cycle) * 1000.0;
}

inline double estimate_energy(double power_mw, double time_ms) {
  if (power_mw < 0 || time_ms < 0) throw ParameterError("power and time must be non-negative");
  return power_mw * time_ms / 1000.0;
}

// Report for a graph whose tensors carry their storage element type.
inline FootprintReport estimate(const ModelGraph& g, ElementType t, const DeviceProfile& p) {
  const ModelGraph typed = with_element_type(g, t);
  FootprintReport r;
  r.flash_kb = static_cast<double>(flash_bytes(typed, t, p)) / 1024.0;
  r.ram_kb = static_cast<double>(ram_peak(typed)) / 1024.0;
  r.macs = count_macs(typed).total;
  r.time_ms = estimate_latency(r.macs, p);
  r.power_mw = p.active_power_mw;
  r.energy_mj = estimate_energy(r.power_mw, r.time_ms);
  return r;
}

inline FootprintReport estimate(const QuantizedModel& qm, const DeviceProfile& p) {
  FootprintReport r = estimate(qm.graph, ElementType::int8, p);
  r.flash_kb = static_cast<double>(flash_bytes(qm, p)) / 1024.0;
  return r;
}

struct Reductions {
  double flash = 0, ram = 0, time = 0, power = 0, energy = 0;
};

inline nlohmann::json to_json(const Reductions& r) {
  return {{"flash", r.flash}, {"ram", r.ram}, {"time", r.time}, {"power", r.power}, {"energy", r.energy}};
}

inline double reduction_percent(double original, double optimized, const char* metric) {
  if (original == 0.0) throw EstimatorError(std::string("original ") + metric + " is zero; reduction undefined");
  return std::round((original - optimized) / original * 100.0 * 100.0) / 100.0;
}

// Percent reductions (orig - opt) / orig * 100, rounded to two decimals.
inline Reductions reduction_report(const FootprintReport& original, const FootprintReport& optimized) {
  return {reduction_percent(original.flash_kb, optimized.flash_kb, "flash"),
          reduction_percent(original.ram_kb, optimized.ram_kb, "ram"),
          reduction_percent(original.time_ms, optimized.time_ms, "time"),
          reduction_percent(original.power_mw, optimized.power_mw, "power"),
          reduction_percent(original.energy_mj, optimized.energy_mj, "energy")};
}

// Applies the fields present in `j` on top of `r`. Energy is recomputed from
// power and time unless given explicitly.
inline FootprintReport apply_overrides(FootprintReport r, const nlohmann::json& j) {
  r.flash_kb = j.value("flash_kb", r.flash_kb);
  r.ram_kb = j.value("ram_kb", r.ram_kb);
  r.macs = j.value("macs", r.macs);
  r.time_ms = j.value("time_ms", r.time_ms);
  r.power_mw = j.value("power_mw", r.power_mw);
  r.energy_mj = j.contains("energy_mj") ? j.at("energy_mj").get<double>() : estimate_energy(r.power_mw, r.time_ms);
  return r;
}

}  // namespace tinybatt

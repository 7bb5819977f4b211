// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Post-training static quantization: calibration ranges, per-tensor affine
// parameters, int8 conversion and the fixed-point requantization multipliers
// that the integer engine and the emitted C consume.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "tinybatt/engine_float.hpp"
#include "tinybatt/error.hpp"
#include "tinybatt/model_ir.hpp"
#include "tinybatt/numeric.hpp"

namespace tinybatt {

inline constexpr int kQMin = -128;
inline constexpr int kQMax = 127;

struct QuantParams {
  double scale = 1.0;
  int zero_point = 0;
  bool symmetric = false;

  bool valid() const {
    return scale > 0.0 && std::isfinite(scale) && zero_point >= kQMin && zero_point <= kQMax &&
           (!symmetric || zero_point == 0);
  }
  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

enum class QuantMode { symmetric, asymmetric };

// Realized multiplier is mantissa_q31 * 2^-(31 + shift).
struct RequantMultiplier {
  std::int32_t mantissa_q31 = 0;
  int shift = 0;

  double realized() const { return std::ldexp(static_cast<double>(mantissa_q31), -31 - shift); }
  friend bool operator==(const RequantMultiplier&, const RequantMultiplier&) = default;
};

struct Range {
  double min = 0.0;
  double max = 0.0;

  void merge(const Range& o) {
    min = std::min(min, o.min);
    max = std::max(max, o.max);
  }
  friend bool operator==(const Range&, const Range&) = default;
};

using CalibrationRanges = std::map<std::string, Range>;

inline QuantParams compute_qparams(double min, double max, QuantMode mode) {
  if (!std::isfinite(min) || !std::isfinite(max))
    throw ParameterError("quantization range bounds must be finite");
  if (min > max) throw ParameterError("quantization range has min > max");
  if (mode == QuantMode::symmetric) {
    const double m = std::max(std::fabs(min), std::fabs(max));
    if (m == 0.0) return {1.0, 0, true};
    return {m / 127.0, 0, true};
  }
  min = std::min(min, 0.0);
  max = std::max(max, 0.0);
  if (min == max) return {1.0, 0, false};
  const double s = (max - min) / 255.0;
  const double zp = round_half_away(-128.0 - min / s);
  return {s, static_cast<int>(std::clamp(zp, double{kQMin}, double{kQMax})), false};
}

inline std::int8_t quantize_value(double x, const QuantParams& qp) {
  const double q = round_half_away(x / qp.scale) + qp.zero_point;
  return static_cast<std::int8_t>(std::clamp(q, double{kQMin}, double{kQMax}));
}

inline double dequantize_value(std::int8_t q, const QuantParams& qp) {
  return (static_cast<int>(q) - qp.zero_point) * qp.scale;
}

inline std::vector<std::int8_t> quantize_tensor(std::span<const float> x, const QuantParams& qp) {
  if (!qp.valid()) throw ParameterError("invalid quantization parameters");
  std::vector<std::int8_t> q(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) q[i] = quantize_value(x[i], qp);
  return q;
}

inline std::vector<float> dequantize_tensor(std::span<const std::int8_t> q, const QuantParams& qp) {
  if (!qp.valid()) throw ParameterError("invalid quantization parameters");
  std::vector<float> x(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) x[i] = static_cast<float>(dequantize_value(q[i], qp));
  return x;
}

// Encodes M in (0, 1) as a normalized Q31 mantissa and a right shift.
inline RequantMultiplier derive_requant(double multiplier) {
  if (!(multiplier > 0.0) || !(multiplier < 1.0))
    throw RangeError("requantization multiplier " + std::to_string(multiplier) +
                     " is outside (0, 1); the output scale must be enlarged");
  int exponent = 0;
  const double m = std::frexp(multiplier, &exponent);  // m in [0.5, 1)
  auto mantissa = static_cast<std::int64_t>(round_half_away(std::ldexp(m, 31)));
  int shift = -exponent;
  if (mantissa == (std::int64_t{1} << 31)) {
    mantissa >>= 1;
    --shift;
  }
  if (shift < 0)
    throw RangeError("requantization multiplier rounds to 1 in Q31; the output scale must be enlarged");
  if (shift > 31) throw RangeError("requantization multiplier " + std::to_string(multiplier) + " underflows");
  return {static_cast<std::int32_t>(mantissa), shift};
}

inline RequantMultiplier derive_requant(double s_in, double s_w, double s_out) {
  if (!(s_in > 0.0) || !(s_w > 0.0) || !(s_out > 0.0))
    throw RangeError("requantization scales must be positive");
  return derive_requant(s_in * s_w / s_out);
}

// Running min/max of every activation over the calibration set, plus the
// range of every parameter tensor. Inputs may be split across `workers`
// threads; merging is order-insensitive.
inline CalibrationRanges collect_ranges(const ModelGraph& g, const WeightStore& weights,
                                        std::span<const std::vector<float>> calib_inputs,
                                        unsigned workers = 1) {
  if (calib_inputs.empty()) throw ParameterError("calibration set is empty");
  auto observe_range = [&g, &weights](std::span<const std::vector<float>> inputs) {
    CalibrationRanges local;
    for (const auto& input : inputs) {
      run_float(g, weights, input, [&local](const std::string& name, std::span<const float> v) {
        if (v.empty()) return;
        auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        Range r{*lo, *hi};
        auto [it, inserted] = local.emplace(name, r);
        if (!inserted) it->second.merge(r);
      });
    }
    return local;
  };

  workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(calib_inputs.size()));
  std::vector<CalibrationRanges> partial(workers);
  if (workers == 1) {
    partial[0] = observe_range(calib_inputs);
  } else {
    std::vector<std::jthread> threads;
    const std::size_t chunk = (calib_inputs.size() + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(calib_inputs.size(), w * chunk);
      const std::size_t end = std::min(calib_inputs.size(), begin + chunk);
      threads.emplace_back([&, w, begin, end] { partial[w] = observe_range(calib_inputs.subspan(begin, end - begin)); });
    }
  }

  CalibrationRanges ranges;
  for (const auto& p : partial) {
    for (const auto& [name, r] : p) {
      auto [it, inserted] = ranges.emplace(name, r);
      if (!inserted) it->second.merge(r);
    }
  }
  for (const auto& [name, values] : weights) {
    if (values.empty()) continue;
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    ranges[name] = Range{*lo, *hi};
  }
  return ranges;
}

struct ClampRange {
  int lo = kQMin;
  int hi = kQMax;
  friend bool operator==(const ClampRange&, const ClampRange&) = default;
};

struct QuantizedLayer {
  std::vector<std::int8_t> weights;
  std::vector<std::int32_t> bias;
  double bias_scale = 0.0;           // s_in * s_w
  RequantMultiplier multiplier;      // conv/fc: s_in*s_w/s_out; residual_add: s_a/s_out
  RequantMultiplier multiplier_b;    // residual_add: s_b/s_out
  ClampRange clamp;
};

struct QuantizedModel {
  ModelGraph graph;  // int8 element type throughout
  // Activation tensors by tensor name, parameter tensors by "<layer>.weight".
  std::map<std::string, QuantParams> qparams;
  std::vector<QuantizedLayer> layers;  // parallel to graph.layers

  const QuantParams& params(const std::string& name) const {
    auto it = qparams.find(name);
    if (it == qparams.end()) throw LookupError("no quantization parameters for '" + name + "'");
    return it->second;
  }
  std::size_t weight_bytes() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size();
    return n;
  }
  std::size_t bias_bytes() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.bias.size() * sizeof(std::int32_t);
    return n;
  }
};

namespace detail {

inline std::vector<std::size_t> consumers_of(const ModelGraph& g, const std::string& tensor) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    for (const auto& in : g.layers[i].inputs)
      if (in == tensor) {
        out.push_back(i);
        break;
      }
  return out;
}

// Index of the relu6 that a parameterized layer's output feeds when that
// relu6 is its only consumer.
inline std::optional<std::size_t> fused_relu6(const ModelGraph& g, const Layer& l) {
  if (!l.has_parameters()) return std::nullopt;
  auto users = consumers_of(g, l.output);
  if (users.size() != 1 || g.layers[users[0]].kind != OpKind::relu6) return std::nullopt;
  return users[0];
}

inline ClampRange relu6_clamp(const QuantParams& qp) {
  return {std::max(kQMin, qp.zero_point), static_cast<int>(quantize_value(6.0, qp))};
}

// Smallest widening of an asymmetric range whose scale is at least
// `min_scale` (1 + 2^-20), keeping the zero point near its old position.
inline QuantParams widen_to_scale(const QuantParams& qp, double min_scale) {
  const double target = min_scale * (1.0 + 0x1.0p-20);
  if (qp.scale >= target) return qp;
  const double f = target / qp.scale;
  const double lo = (kQMin - qp.zero_point) * qp.scale * f;
  const double hi = (kQMax - qp.zero_point) * qp.scale * f;
  QuantParams w = compute_qparams(lo, hi, QuantMode::asymmetric);
  if (w.scale < target) w.scale = target;
  return w;
}

}  // namespace detail

// Builds the per-layer integer execution data (multipliers, clamps) from a
// graph, its quantization parameters and integer parameters. Used both by
// quantize_model and when loading a quantized manifest.
inline QuantizedModel assemble_quantized(ModelGraph graph, std::map<std::string, QuantParams> qparams,
                                         std::map<std::string, std::vector<std::int8_t>> int_weights,
                                         std::map<std::string, std::vector<std::int32_t>> int_biases) {
  QuantizedModel qm;
  qm.graph = with_element_type(std::move(graph), ElementType::int8);
  qm.qparams = std::move(qparams);
  const ModelGraph& g = qm.graph;
  for (const auto& t : g.tensors)
    if (!qm.qparams.contains(t.name)) throw QuantizationError("tensor '" + t.name + "' has no quantization parameters");
  for (const auto& [name, qp] : qm.qparams)
    if (!qp.valid()) throw QuantizationError("tensor '" + name + "' has invalid quantization parameters");

  qm.layers.resize(g.layers.size());
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    QuantizedLayer& ql = qm.layers[i];
    const QuantParams& out = qm.params(l.output);
    const QuantParams& in = qm.params(l.inputs[0]);
    try {
      switch (l.kind) {
        case OpKind::conv2d:
        case OpKind::depthwise_conv2d:
        case OpKind::fully_connected: {
          const QuantParams& wq = qm.params(l.weight_name());
          auto w = int_weights.find(l.weight_name());
          auto b = int_biases.find(l.bias_name());
          if (w == int_weights.end() || w->second.size() != weight_count(l))
            throw QuantizationError("layer '" + l.name + "' is missing int8 weights");
          if (b == int_biases.end() || b->second.size() != bias_count(l))
            throw QuantizationError("layer '" + l.name + "' is missing int32 biases");
          ql.weights = std::move(w->second);
          ql.bias = std::move(b->second);
          ql.bias_scale = in.scale * wq.scale;
          ql.multiplier = derive_requant(in.scale, wq.scale, out.scale);
          if (auto r = detail::fused_relu6(g, l); r && qm.params(g.layers[*r].output) == out)
            ql.clamp = detail::relu6_clamp(out);
          break;
        }
        case OpKind::relu6:
          if (!(in == out))
            throw QuantizationError("relu6 '" + l.name + "' must share quantization parameters with its input");
          ql.clamp = detail::relu6_clamp(out);
          break;
        case OpKind::global_avg_pool:
          if (!(in == out))
            throw QuantizationError("global_avg_pool '" + l.name + "' must keep its input quantization");
          break;
        case OpKind::residual_add:
          ql.multiplier = derive_requant(in.scale / out.scale);
          ql.multiplier_b = derive_requant(qm.params(l.inputs[1]).scale / out.scale);
          break;
        case OpKind::argmax_head:
          if (g.tensor(l.inputs[0]).shape.elements() > 128)
            throw QuantizationError("argmax head '" + l.name + "' supports at most 128 classes");
          break;
      }
    } catch (const RangeError& e) {
      throw QuantizationError("layer '" + l.name + "': " + e.what());
    }
  }
  return qm;
}

// Weights: symmetric per-tensor int8. Activations: asymmetric per-tensor
// int8. Biases: int32 at scale s_in * s_w. relu6 shares its input's
// parameters; when it directly follows a conv/fc, both take the relu6 output
// range and the clamp is fused into the producer.
inline QuantizedModel quantize_model(const ModelGraph& graph, const WeightStore& weights,
                                     const CalibrationRanges& ranges) {
  const ModelGraph& g = graph;
  std::map<std::string, QuantParams> qp;
  auto range_params = [&](const std::string& tensor) {
    auto it = ranges.find(tensor);
    if (it == ranges.end()) throw QuantizationError("no calibration range for tensor '" + tensor + "'");
    return compute_qparams(it->second.min, it->second.max, QuantMode::asymmetric);
  };
  auto weight_params = [&](const Layer& l) {
    const auto& w = detail::lookup_weights(weights, l.weight_name(), weight_count(l));
    auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    return compute_qparams(*lo, *hi, QuantMode::symmetric);
  };

  qp[g.input] = range_params(g.input);
  for (std::size_t idx : g.schedule) {
    const Layer& l = g.layers[idx];
    if (qp.contains(l.output)) continue;  // already assigned through fusion
    const QuantParams& in = qp.at(l.inputs[0]);
    switch (l.kind) {
      case OpKind::conv2d:
      case OpKind::depthwise_conv2d:
      case OpKind::fully_connected: {
        const QuantParams wq = weight_params(l);
        qp[l.weight_name()] = wq;
        auto relu = detail::fused_relu6(g, l);
        QuantParams out = range_params(relu ? g.layers[*relu].output : l.output);
        out = detail::widen_to_scale(out, in.scale * wq.scale);
        qp[l.output] = out;
        if (relu) qp[g.layers[*relu].output] = out;
        break;
      }
      case OpKind::relu6:
      case OpKind::global_avg_pool:
        qp[l.output] = in;
        break;
      case OpKind::residual_add: {
        const QuantParams& b = qp.at(l.inputs[1]);
        qp[l.output] = detail::widen_to_scale(range_params(l.output), std::max(in.scale, b.scale));
        break;
      }
      case OpKind::argmax_head:
        qp[l.output] = QuantParams{1.0, 0, false};
        break;
    }
  }

  std::map<std::string, std::vector<std::int8_t>> int_weights;
  std::map<std::string, std::vector<std::int32_t>> int_biases;
  for (const Layer& l : g.layers) {
    if (!l.has_parameters()) continue;
    const auto& w = detail::lookup_weights(weights, l.weight_name(), weight_count(l));
    const auto& b = detail::lookup_weights(weights, l.bias_name(), bias_count(l));
    const QuantParams& wq = qp.at(l.weight_name());
    int_weights[l.weight_name()] = quantize_tensor(w, wq);
    const double bias_scale = qp.at(l.inputs[0]).scale * wq.scale;
    std::vector<std::int32_t> qb(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double v = round_half_away(b[i] / bias_scale);
      if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max())
        throw QuantizationError("layer '" + l.name + "' bias does not fit int32 at scale s_in*s_w");
      qb[i] = static_cast<std::int32_t>(v);
    }
    int_biases[l.bias_name()] = std::move(qb);
  }
  return assemble_quantized(g, std::move(qp), std::move(int_weights), std::move(int_biases));
}

}  // namespace tinybatt

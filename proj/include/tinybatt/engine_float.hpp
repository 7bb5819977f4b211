// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Real-valued reference inference. Sums inside conv/fc accumulate in double
// in the fixed order (kernel row, kernel col, input channel) and are stored
// as float.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tinybatt/error.hpp"
#include "tinybatt/model_ir.hpp"

namespace tinybatt {

// Parameter tensors keyed by "<layer>.weight" / "<layer>.bias".
using WeightStore = std::map<std::string, std::vector<float>>;

// Called once per produced tensor (and once for the input) in schedule order.
using TensorObserver = std::function<void(const std::string&, std::span<const float>)>;

namespace detail {

inline const std::vector<float>& lookup_weights(const WeightStore& w, const std::string& name,
                                                std::size_t expected) {
  auto it = w.find(name);
  if (it == w.end()) throw LookupError("missing weight tensor '" + name + "'");
  if (it->second.size() != expected)
    throw LookupError("weight tensor '" + name + "' has " + std::to_string(it->second.size()) +
                      " elements, expected " + std::to_string(expected));
  for (float v : it->second)
    if (!std::isfinite(v)) throw NumericError("non-finite value in weight tensor '" + name + "'");
  return it->second;
}

inline std::vector<float> conv2d_float(std::span<const float> x, Shape in, const Layer& l,
                                       Shape out, const std::vector<float>& w,
                                       const std::vector<float>& bias) {
  std::vector<float> y(out.elements());
  const int k = l.kernel;
  const int pad_t = window_pad_before(in.height, out.height, k, l.stride, l.padding);
  const int pad_l = window_pad_before(in.width, out.width, k, l.stride, l.padding);
  const bool depthwise = l.kind == OpKind::depthwise_conv2d;
  for (int oy = 0; oy < out.height; ++oy) {
    for (int ox = 0; ox < out.width; ++ox) {
      for (int oc = 0; oc < out.channels; ++oc) {
        double acc = 0.0;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * l.stride - pad_t + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * l.stride - pad_l + kx;
            if (ix < 0 || ix >= in.width) continue;
            const std::size_t base = (static_cast<std::size_t>(iy) * in.width + ix) * in.channels;
            if (depthwise) {
              acc += static_cast<double>(x[base + oc]) * w[(static_cast<std::size_t>(ky) * k + kx) * in.channels + oc];
            } else {
              const std::size_t wbase =
                  ((static_cast<std::size_t>(oc) * k + ky) * k + kx) * in.channels;
              for (int ic = 0; ic < in.channels; ++ic)
                acc += static_cast<double>(x[base + ic]) * w[wbase + ic];
            }
          }
        }
        acc += bias[oc];
        y[(static_cast<std::size_t>(oy) * out.width + ox) * out.channels + oc] = static_cast<float>(acc);
      }
    }
  }
  return y;
}

}  // namespace detail

inline void check_weights_finite(const WeightStore& w) {
  for (const auto& [name, values] : w)
    for (float v : values)
      if (!std::isfinite(v)) throw NumericError("non-finite value in weight tensor '" + name + "'");
}

// Runs the schedule and returns the logits (the argmax head's input).
inline std::vector<float> run_float(const ModelGraph& g, const WeightStore& weights,
                                    std::span<const float> input, const TensorObserver& observe = {}) {
  const TensorSpec& in_spec = g.tensor(g.input);
  if (input.size() != in_spec.shape.elements())
    throw ParameterError("input has " + std::to_string(input.size()) + " elements, graph expects " +
                         std::to_string(in_spec.shape.elements()));
  if (g.schedule.size() != g.layers.size()) throw GraphError("graph has no schedule; run infer_shapes first");

  std::map<std::string, std::vector<float>> values;
  values[g.input].assign(input.begin(), input.end());
  if (observe) observe(g.input, values[g.input]);

  for (std::size_t idx : g.schedule) {
    const Layer& l = g.layers[idx];
    const Shape in_shape = g.tensor(l.inputs[0]).shape;
    const Shape out_shape = g.tensor(l.output).shape;
    const std::vector<float>& x = values.at(l.inputs[0]);
    std::vector<float> y;
    switch (l.kind) {
      case OpKind::conv2d:
      case OpKind::depthwise_conv2d: {
        const auto& w = detail::lookup_weights(weights, l.weight_name(), weight_count(l));
        const auto& b = detail::lookup_weights(weights, l.bias_name(), bias_count(l));
        y = detail::conv2d_float(x, in_shape, l, out_shape, w, b);
        break;
      }
      case OpKind::fully_connected: {
        const auto& w = detail::lookup_weights(weights, l.weight_name(), weight_count(l));
        const auto& b = detail::lookup_weights(weights, l.bias_name(), bias_count(l));
        y.resize(static_cast<std::size_t>(l.out_channels));
        for (int o = 0; o < l.out_channels; ++o) {
          double acc = 0.0;
          const std::size_t base = static_cast<std::size_t>(o) * l.in_channels;
          for (int i = 0; i < l.in_channels; ++i) acc += static_cast<double>(x[i]) * w[base + i];
          y[o] = static_cast<float>(acc + b[o]);
        }
        break;
      }
      case OpKind::relu6:
        y.resize(x.size());
        std::transform(x.begin(), x.end(), y.begin(), [](float v) { return std::min(std::max(v, 0.0f), 6.0f); });
        break;
      case OpKind::global_avg_pool: {
        const std::size_t n = static_cast<std::size_t>(in_shape.height) * in_shape.width;
        y.resize(static_cast<std::size_t>(in_shape.channels));
        for (int c = 0; c < in_shape.channels; ++c) {
          double acc = 0.0;
          for (std::size_t p = 0; p < n; ++p) acc += x[p * in_shape.channels + c];
          y[c] = static_cast<float>(acc / static_cast<double>(n));
        }
        break;
      }
      case OpKind::residual_add: {
        const std::vector<float>& b = values.at(l.inputs[1]);
        y.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + b[i];
        break;
      }
      case OpKind::argmax_head: {
        std::size_t best = 0;
        for (std::size_t i = 1; i < x.size(); ++i)
          if (x[i] > x[best]) best = i;
        y = {static_cast<float>(best)};
        break;
      }
    }
    auto& stored = values[l.output];
    stored = std::move(y);
    if (observe) observe(l.output, stored);
  }
  return values.at(g.logits_tensor());
}

// Index of the largest logit; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

inline std::size_t predict_float(const ModelGraph& g, const WeightStore& weights,
                                 std::span<const float> input) {
  const auto logits = run_float(g, weights, input);
  return argmax(std::span<const float>(logits));
}

}  // namespace tinybatt

// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Integer-only inference. int8 tensors, int32 accumulation with overflow
// checking, Q31 requantization with round-half-away-from-zero. The emitted C
// kernels reproduce these loops in the same order.

#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tinybatt/error.hpp"
#include "tinybatt/model_ir.hpp"
#include "tinybatt/numeric.hpp"
#include "tinybatt/quantizer.hpp"

namespace tinybatt {

struct IntTensor {
  Shape shape;
  std::vector<std::int8_t> data;
  QuantParams qparams;
};

struct ConvGeometry {
  int kernel = 1;
  int stride = 1;
  Padding padding = Padding::same;
};

namespace detail {

class CheckedAccumulator {
 public:
  explicit CheckedAccumulator(std::int64_t start = 0) : value_(start) { check(); }

  void add(std::int64_t v) {
    value_ += v;
    check();
  }
  std::int32_t value() const { return static_cast<std::int32_t>(value_); }

 private:
  void check() const {
    if (value_ < std::numeric_limits<std::int32_t>::min() || value_ > std::numeric_limits<std::int32_t>::max())
      throw OverflowError("int32 accumulator overflow");
  }
  std::int64_t value_;
};

}  // namespace detail

// round_half_away(acc * mantissa / 2^(31 + shift)) without clamping.
inline std::int32_t rescale(std::int32_t acc, const RequantMultiplier& rm) {
  const std::int64_t prod = static_cast<std::int64_t>(acc) * rm.mantissa_q31;
  return static_cast<std::int32_t>(shift_round_half_away(prod, 31 + rm.shift));
}

inline std::int8_t requantize(std::int32_t acc, const RequantMultiplier& rm, int zp_out,
                              ClampRange clamp = {}) {
  const std::int64_t v = static_cast<std::int64_t>(rescale(acc, rm)) + zp_out;
  return clamp_to<std::int8_t>(v, clamp.lo, clamp.hi);
}

// conv2d weights are [out][k][k][in]; depthwise weights are [k][k][c].
// Each output sums over (kernel row, kernel col, input channel) in that order
// starting from the bias.
inline IntTensor conv2d_int(const IntTensor& input, std::span<const std::int8_t> weights,
                            std::span<const std::int32_t> bias, int out_channels, ConvGeometry geom,
                            const RequantMultiplier& rm, const QuantParams& out_qp, ClampRange clamp,
                            bool depthwise = false) {
  const Shape in = input.shape;
  if (depthwise) out_channels = in.channels;
  const int k = geom.kernel;
  const std::size_t expected_w = depthwise ? static_cast<std::size_t>(k) * k * in.channels
                                           : static_cast<std::size_t>(out_channels) * k * k * in.channels;
  if (weights.size() != expected_w) throw GraphError("conv weights do not match layer geometry");
  if (bias.size() != static_cast<std::size_t>(out_channels)) throw GraphError("conv bias length mismatch");
  const Shape out{window_output_extent(in.height, k, geom.stride, geom.padding),
                  window_output_extent(in.width, k, geom.stride, geom.padding), out_channels};
  if (!out.resolved()) throw GraphError("conv input is smaller than its kernel");
  const int pad_t = window_pad_before(in.height, out.height, k, geom.stride, geom.padding);
  const int pad_l = window_pad_before(in.width, out.width, k, geom.stride, geom.padding);
  const int zp_in = input.qparams.zero_point;

  IntTensor result{out, std::vector<std::int8_t>(out.elements()), out_qp};
  for (int oy = 0; oy < out.height; ++oy) {
    for (int ox = 0; ox < out.width; ++ox) {
      for (int oc = 0; oc < out.channels; ++oc) {
        detail::CheckedAccumulator acc(bias[oc]);
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * geom.stride - pad_t + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * geom.stride - pad_l + kx;
            if (ix < 0 || ix >= in.width) continue;
            const std::size_t base = (static_cast<std::size_t>(iy) * in.width + ix) * in.channels;
            if (depthwise) {
              const int x = input.data[base + oc] - zp_in;
              acc.add(static_cast<std::int64_t>(x) * weights[(static_cast<std::size_t>(ky) * k + kx) * in.channels + oc]);
            } else {
              const std::size_t wbase = ((static_cast<std::size_t>(oc) * k + ky) * k + kx) * in.channels;
              for (int ic = 0; ic < in.channels; ++ic) {
                const int x = input.data[base + ic] - zp_in;
                acc.add(static_cast<std::int64_t>(x) * weights[wbase + ic]);
              }
            }
          }
        }
        result.data[(static_cast<std::size_t>(oy) * out.width + ox) * out.channels + oc] =
            requantize(acc.value(), rm, out_qp.zero_point, clamp);
      }
    }
  }
  return result;
}

inline IntTensor depthwise_conv2d_int(const IntTensor& input, std::span<const std::int8_t> weights,
                                      std::span<const std::int32_t> bias, ConvGeometry geom,
                                      const RequantMultiplier& rm, const QuantParams& out_qp,
                                      ClampRange clamp) {
  return conv2d_int(input, weights, bias, input.shape.channels, geom, rm, out_qp, clamp, true);
}

// Input is flattened in HWC order; weights are [out][in].
inline IntTensor fully_connected_int(const IntTensor& input, std::span<const std::int8_t> weights,
                                     std::span<const std::int32_t> bias, int out_channels,
                                     const RequantMultiplier& rm, const QuantParams& out_qp,
                                     ClampRange clamp) {
  const std::size_t n = input.data.size();
  if (weights.size() != n * static_cast<std::size_t>(out_channels) ||
      bias.size() != static_cast<std::size_t>(out_channels))
    throw GraphError("fully_connected parameters do not match layer geometry");
  IntTensor result{{1, 1, out_channels}, std::vector<std::int8_t>(static_cast<std::size_t>(out_channels)), out_qp};
  const int zp_in = input.qparams.zero_point;
  for (int o = 0; o < out_channels; ++o) {
    detail::CheckedAccumulator acc(bias[o]);
    for (std::size_t i = 0; i < n; ++i)
      acc.add(static_cast<std::int64_t>(input.data[i] - zp_in) * weights[static_cast<std::size_t>(o) * n + i]);
    result.data[o] = requantize(acc.value(), rm, out_qp.zero_point, clamp);
  }
  return result;
}

// Both operands are rescaled to the output scale in int32 and summed.
inline IntTensor residual_add_int(const IntTensor& a, const IntTensor& b, const RequantMultiplier& rm_a,
                                  const RequantMultiplier& rm_b, const QuantParams& out_qp) {
  if (a.shape != b.shape)
    throw GraphError("residual_add operand shapes differ: " + to_string(a.shape) + " vs " + to_string(b.shape));
  IntTensor result{a.shape, std::vector<std::int8_t>(a.data.size()), out_qp};
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const std::int64_t v = static_cast<std::int64_t>(rescale(a.data[i] - a.qparams.zero_point, rm_a)) +
                           rescale(b.data[i] - b.qparams.zero_point, rm_b) + out_qp.zero_point;
    result.data[i] = clamp_to<std::int8_t>(v, kQMin, kQMax);
  }
  return result;
}

// Mean of the raw int8 values; output keeps the input scale and zero point.
inline IntTensor global_avg_pool_int(const IntTensor& input) {
  const Shape in = input.shape;
  if (!in.resolved()) throw GraphError("global_avg_pool input must be at least 1x1x1");
  const std::int64_t n = static_cast<std::int64_t>(in.height) * in.width;
  IntTensor result{{1, 1, in.channels}, std::vector<std::int8_t>(static_cast<std::size_t>(in.channels)), input.qparams};
  for (int c = 0; c < in.channels; ++c) {
    detail::CheckedAccumulator acc;
    for (std::int64_t p = 0; p < n; ++p) acc.add(input.data[static_cast<std::size_t>(p) * in.channels + c]);
    result.data[c] = clamp_to<std::int8_t>(div_round_half_away(acc.value(), n), kQMin, kQMax);
  }
  return result;
}

inline IntTensor relu6_int(const IntTensor& input, ClampRange clamp) {
  IntTensor result = input;
  for (auto& v : result.data) v = clamp_to<std::int8_t>(v, clamp.lo, clamp.hi);
  return result;
}

struct IntRunResult {
  IntTensor logits;
  std::size_t predicted = 0;
};

inline IntRunResult run_int(const QuantizedModel& qm, const IntTensor& input) {
  const ModelGraph& g = qm.graph;
  const TensorSpec& in_spec = g.tensor(g.input);
  if (input.data.size() != in_spec.shape.elements())
    throw ParameterError("input has " + std::to_string(input.data.size()) + " elements, model expects " +
                         std::to_string(in_spec.shape.elements()));
  std::map<std::string, IntTensor> values;
  values[g.input] = IntTensor{in_spec.shape, input.data, qm.params(g.input)};

  for (std::size_t idx : g.schedule) {
    const Layer& l = g.layers[idx];
    const QuantizedLayer& ql = qm.layers[idx];
    const IntTensor& x = values.at(l.inputs[0]);
    const QuantParams& out_qp = qm.params(l.output);
    IntTensor y;
    switch (l.kind) {
      case OpKind::conv2d:
        y = conv2d_int(x, ql.weights, ql.bias, l.out_channels, {l.kernel, l.stride, l.padding}, ql.multiplier,
                       out_qp, ql.clamp);
        break;
      case OpKind::depthwise_conv2d:
        y = depthwise_conv2d_int(x, ql.weights, ql.bias, {l.kernel, l.stride, l.padding}, ql.multiplier, out_qp,
                                 ql.clamp);
        break;
      case OpKind::fully_connected:
        y = fully_connected_int(x, ql.weights, ql.bias, l.out_channels, ql.multiplier, out_qp, ql.clamp);
        break;
      case OpKind::relu6:
        y = relu6_int(x, ql.clamp);
        y.qparams = out_qp;
        break;
      case OpKind::global_avg_pool:
        y = global_avg_pool_int(x);
        break;
      case OpKind::residual_add:
        y = residual_add_int(x, values.at(l.inputs[1]), ql.multiplier, ql.multiplier_b, out_qp);
        break;
      case OpKind::argmax_head:
        y = IntTensor{{1, 1, 1}, {static_cast<std::int8_t>(argmax(std::span<const std::int8_t>(x.data)))}, out_qp};
        break;
    }
    values[l.output] = std::move(y);
  }
  IntRunResult r{values.at(g.logits_tensor()), 0};
  r.predicted = argmax(std::span<const std::int8_t>(r.logits.data));
  return r;
}

inline IntTensor quantize_input(const QuantizedModel& qm, std::span<const float> x) {
  const QuantParams& qp = qm.params(qm.graph.input);
  return {qm.graph.tensor(qm.graph.input).shape, quantize_tensor(x, qp), qp};
}

}  // namespace tinybatt

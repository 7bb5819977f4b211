// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Emits a self-contained C99 translation of a quantized model: constant
// weight/bias tables, one static activation arena, one kernel per layer kind
// in use and an unrolled schedule. The arithmetic mirrors engine_int exactly
// and uses only integer types.

#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tinybatt/engine_int.hpp"
#include "tinybatt/error.hpp"
#include "tinybatt/golden.hpp"
#include "tinybatt/memory_plan.hpp"
#include "tinybatt/model_io.hpp"
#include "tinybatt/numeric.hpp"
#include "tinybatt/quantizer.hpp"

namespace tinybatt {

struct EmitOptions {
  std::size_t arena_cap = 256 * 1024;
  std::size_t golden_count = 64;
  std::uint64_t golden_seed = 7;
};

struct EmittedBundle {
  std::string header;
  std::string source;
  std::vector<std::uint8_t> golden;
  std::uint64_t digest = 0;
  std::size_t arena_size = 0;
};

// Content digest over the quantized manifest and blob.
inline std::uint64_t model_digest(const QuantizedModel& qm) {
  const std::string manifest = quantized_manifest(qm, "model.bin").dump();
  const auto blob = quantized_blob(qm);
  return fnv1a64(std::span<const std::uint8_t>(blob), fnv1a64(manifest));
}

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Comment-safe rendering of a user-supplied name.
inline std::string comment_text(std::string_view s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') ? c : '_';
  return out;
}

inline std::string int_literal(std::int64_t v) {
  if (v == INT32_MIN) return "(-2147483647 - 1)";
  return std::to_string(v);
}

template <typename T>
void emit_table(std::ostringstream& os, const char* type, const std::string& name, std::span<const T> values) {
  os << "static const " << type << " " << name << "[" << values.size() << "] = {";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i % 16 == 0) os << "\n    ";
    os << int_literal(values[i]) << (i + 1 < values.size() ? "," : "");
    if (i % 16 != 15 && i + 1 < values.size()) os << " ";
  }
  os << "\n};\n";
}

inline constexpr const char* kRequantHelpers = R"(static int32_t tb_rescale(int32_t acc, int32_t mantissa, int shift)
{
    const int64_t prod = (int64_t)acc * (int64_t)mantissa;
    const int total = 31 + shift;
    const int64_t half = (int64_t)1 << (total - 1);
    if (prod >= 0) {
        return (int32_t)((prod + half) >> total);
    }
    return (int32_t)(-((-prod + half) >> total));
}

static int8_t tb_clamp(int32_t v, int32_t lo, int32_t hi)
{
    if (v < lo) {
        return (int8_t)lo;
    }
    if (v > hi) {
        return (int8_t)hi;
    }
    return (int8_t)v;
}

static int8_t tb_requantize(int32_t acc, int32_t mantissa, int shift, int32_t zp_out, int32_t lo, int32_t hi)
{
    return tb_clamp(tb_rescale(acc, mantissa, shift) + zp_out, lo, hi);
}
)";

inline constexpr const char* kConvKernel = R"(
static void tb_conv2d(const int8_t *in, int in_h, int in_w, int in_c,
                      const int8_t *w, const int32_t *bias,
                      int8_t *out, int out_h, int out_w, int out_c,
                      int k, int stride, int pad_t, int pad_l, int32_t zp_in,
                      int32_t mantissa, int shift, int32_t zp_out, int32_t lo, int32_t hi)
{
    int oy, ox, oc, ky, kx, ic;
    for (oy = 0; oy < out_h; ++oy) {
        for (ox = 0; ox < out_w; ++ox) {
            for (oc = 0; oc < out_c; ++oc) {
                int32_t acc = bias[oc];
                for (ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad_t + ky;
                    if (iy < 0 || iy >= in_h) {
                        continue;
                    }
                    for (kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad_l + kx;
                        const int8_t *px;
                        const int8_t *pw;
                        if (ix < 0 || ix >= in_w) {
                            continue;
                        }
                        px = in + ((long)iy * in_w + ix) * in_c;
                        pw = w + (((long)oc * k + ky) * k + kx) * in_c;
                        for (ic = 0; ic < in_c; ++ic) {
                            acc += ((int32_t)px[ic] - zp_in) * (int32_t)pw[ic];
                        }
                    }
                }
                out[((long)oy * out_w + ox) * out_c + oc] = tb_requantize(acc, mantissa, shift, zp_out, lo, hi);
            }
        }
    }
}
)";

inline constexpr const char* kDepthwiseKernel = R"(
static void tb_depthwise_conv2d(const int8_t *in, int in_h, int in_w, int c,
                                const int8_t *w, const int32_t *bias,
                                int8_t *out, int out_h, int out_w,
                                int k, int stride, int pad_t, int pad_l, int32_t zp_in,
                                int32_t mantissa, int shift, int32_t zp_out, int32_t lo, int32_t hi)
{
    int oy, ox, ch, ky, kx;
    for (oy = 0; oy < out_h; ++oy) {
        for (ox = 0; ox < out_w; ++ox) {
            for (ch = 0; ch < c; ++ch) {
                int32_t acc = bias[ch];
                for (ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad_t + ky;
                    if (iy < 0 || iy >= in_h) {
                        continue;
                    }
                    for (kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad_l + kx;
                        if (ix < 0 || ix >= in_w) {
                            continue;
                        }
                        acc += ((int32_t)in[((long)iy * in_w + ix) * c + ch] - zp_in) *
                               (int32_t)w[((long)ky * k + kx) * c + ch];
                    }
                }
                out[((long)oy * out_w + ox) * c + ch] = tb_requantize(acc, mantissa, shift, zp_out, lo, hi);
            }
        }
    }
}
)";

inline constexpr const char* kFullyConnectedKernel = R"(
static void tb_fully_connected(const int8_t *in, int n_in, const int8_t *w, const int32_t *bias,
                               int8_t *out, int n_out, int32_t zp_in,
                               int32_t mantissa, int shift, int32_t zp_out, int32_t lo, int32_t hi)
{
    int o, i;
    for (o = 0; o < n_out; ++o) {
        int32_t acc = bias[o];
        for (i = 0; i < n_in; ++i) {
            acc += ((int32_t)in[i] - zp_in) * (int32_t)w[(long)o * n_in + i];
        }
        out[o] = tb_requantize(acc, mantissa, shift, zp_out, lo, hi);
    }
}
)";

inline constexpr const char* kRelu6Kernel = R"(
static void tb_relu6(const int8_t *in, int8_t *out, long n, int32_t lo, int32_t hi)
{
    long i;
    for (i = 0; i < n; ++i) {
        out[i] = tb_clamp(in[i], lo, hi);
    }
}
)";

inline constexpr const char* kPoolKernel = R"(
static void tb_global_avg_pool(const int8_t *in, int h, int w, int c, int8_t *out)
{
    const int32_t n = (int32_t)h * w;
    int ch;
    int32_t p;
    for (ch = 0; ch < c; ++ch) {
        int32_t sum = 0;
        int32_t mean;
        for (p = 0; p < n; ++p) {
            sum += in[(long)p * c + ch];
        }
        if (sum >= 0) {
            mean = (2 * sum + n) / (2 * n);
        } else {
            mean = -((-2 * sum + n) / (2 * n));
        }
        out[ch] = tb_clamp(mean, -128, 127);
    }
}
)";

inline constexpr const char* kAddKernel = R"(
static void tb_residual_add(const int8_t *a, const int8_t *b, int8_t *out, long n,
                            int32_t zp_a, int32_t mantissa_a, int shift_a,
                            int32_t zp_b, int32_t mantissa_b, int shift_b, int32_t zp_out)
{
    long i;
    for (i = 0; i < n; ++i) {
        const int32_t va = tb_rescale((int32_t)a[i] - zp_a, mantissa_a, shift_a);
        const int32_t vb = tb_rescale((int32_t)b[i] - zp_b, mantissa_b, shift_b);
        out[i] = tb_clamp(va + vb + zp_out, -128, 127);
    }
}
)";

inline constexpr const char* kArgmaxKernel = R"(
static int tb_argmax(const int8_t *in, int n)
{
    int i;
    int best = 0;
    for (i = 1; i < n; ++i) {
        if (in[i] > in[best]) {
            best = i;
        }
    }
    return best;
}
)";

}  // namespace detail

inline EmittedBundle emit_c(const QuantizedModel& qm, const EmitOptions& opts = {}) {
  const ModelGraph& g = qm.graph;
  require_valid(g);
  const ArenaPlan plan = plan_arena(g);
  if (plan.size > opts.arena_cap)
    throw EmissionError("activation arena needs " + std::to_string(plan.size) + " bytes, cap is " +
                        std::to_string(opts.arena_cap));
  const std::string logits = g.logits_tensor();
  const std::size_t in_size = g.tensor(g.input).shape.elements();
  const std::size_t out_size = g.tensor(logits).shape.elements();
  std::set<OpKind> kinds;
  for (const auto& l : g.layers) kinds.insert(l.kind);

  EmittedBundle bundle;
  bundle.digest = model_digest(qm);
  bundle.arena_size = plan.size;
  const std::string banner = "/* Generated by tinybatt. Do not edit.\n * model: " + detail::comment_text(g.name) +
                             "\n * digest (fnv1a64 of manifest and blob): " + detail::hex64(bundle.digest) + "\n */\n";

  std::ostringstream h;
  h << banner << "#ifndef TB_MODEL_H\n#define TB_MODEL_H\n\n"
    << "#define TB_INPUT_SIZE " << in_size << "\n"
    << "#define TB_OUTPUT_SIZE " << out_size << "\n"
    << "#define TB_NUM_CLASSES " << out_size << "\n"
    << "#define TB_ARENA_SIZE " << plan.size << "\n\n"
    << "/* Runs one inference. `in` holds TB_INPUT_SIZE int8 values quantized with the\n"
    << " * model input parameters; `out` receives TB_OUTPUT_SIZE int8 logits. Returns the\n"
    << " * index of the largest logit (lowest index on ties). Not reentrant. */\n"
    << "int tb_model_run(const signed char *in, signed char *out);\n\n#endif /* TB_MODEL_H */\n";
  bundle.header = h.str();

  std::ostringstream c;
  c << banner << "#include <stdint.h>\n\n#include \"model.h\"\n\n";
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    if (!l.has_parameters()) continue;
    c << "/* " << detail::comment_text(l.name) << " */\n";
    detail::emit_table<std::int8_t>(c, "int8_t", "tb_l" + std::to_string(i) + "_w", qm.layers[i].weights);
    detail::emit_table<std::int32_t>(c, "int32_t", "tb_l" + std::to_string(i) + "_b", qm.layers[i].bias);
    c << "\n";
  }
  c << "static int8_t tb_arena[TB_ARENA_SIZE];\n\n" << detail::kRequantHelpers;
  if (kinds.contains(OpKind::conv2d)) c << detail::kConvKernel;
  if (kinds.contains(OpKind::depthwise_conv2d)) c << detail::kDepthwiseKernel;
  if (kinds.contains(OpKind::fully_connected)) c << detail::kFullyConnectedKernel;
  if (kinds.contains(OpKind::relu6)) c << detail::kRelu6Kernel;
  if (kinds.contains(OpKind::global_avg_pool)) c << detail::kPoolKernel;
  if (kinds.contains(OpKind::residual_add)) c << detail::kAddKernel;
  c << detail::kArgmaxKernel;  // tb_model_run always returns the argmax

  auto at = [&](const std::string& tensor) { return "tb_arena + " + std::to_string(plan.offsets.at(tensor)); };
  c << "\nint tb_model_run(const signed char *in, signed char *out)\n{\n    long i;\n    int pred;\n"
    << "    for (i = 0; i < TB_INPUT_SIZE; ++i) {\n        tb_arena[" << plan.offsets.at(g.input) << " + i] = (int8_t)in[i];\n    }\n";
  for (std::size_t idx : g.schedule) {
    const Layer& l = g.layers[idx];
    const QuantizedLayer& ql = qm.layers[idx];
    const Shape in = g.tensor(l.inputs[0]).shape;
    const Shape out = g.tensor(l.output).shape;
    const QuantParams& qin = qm.params(l.inputs[0]);
    const QuantParams& qout = qm.params(l.output);
    const std::string w = "tb_l" + std::to_string(idx) + "_w";
    const std::string b = "tb_l" + std::to_string(idx) + "_b";
    auto requant_args = [&] {
      return std::to_string(ql.multiplier.mantissa_q31) + ", " + std::to_string(ql.multiplier.shift) + ", " +
             std::to_string(qout.zero_point) + ", " + std::to_string(ql.clamp.lo) + ", " + std::to_string(ql.clamp.hi);
    };
    c << "    /* " << detail::comment_text(l.name) << " */\n    ";
    switch (l.kind) {
      case OpKind::conv2d:
        c << "tb_conv2d(" << at(l.inputs[0]) << ", " << in.height << ", " << in.width << ", " << in.channels << ", " << w
          << ", " << b << ", " << at(l.output) << ", " << out.height << ", " << out.width << ", " << out.channels << ", "
          << l.kernel << ", " << l.stride << ", "
          << window_pad_before(in.height, out.height, l.kernel, l.stride, l.padding) << ", "
          << window_pad_before(in.width, out.width, l.kernel, l.stride, l.padding) << ", " << qin.zero_point << ", "
          << requant_args() << ");\n";
        break;
      case OpKind::depthwise_conv2d:
        c << "tb_depthwise_conv2d(" << at(l.inputs[0]) << ", " << in.height << ", " << in.width << ", " << in.channels
          << ", " << w << ", " << b << ", " << at(l.output) << ", " << out.height << ", " << out.width << ", "
          << l.kernel << ", " << l.stride << ", "
          << window_pad_before(in.height, out.height, l.kernel, l.stride, l.padding) << ", "
          << window_pad_before(in.width, out.width, l.kernel, l.stride, l.padding) << ", " << qin.zero_point << ", "
          << requant_args() << ");\n";
        break;
      case OpKind::fully_connected:
        c << "tb_fully_connected(" << at(l.inputs[0]) << ", " << in.elements() << ", " << w << ", " << b << ", "
          << at(l.output) << ", " << out.channels << ", " << qin.zero_point << ", " << requant_args() << ");\n";
        break;
      case OpKind::relu6:
        c << "tb_relu6(" << at(l.inputs[0]) << ", " << at(l.output) << ", " << in.elements() << "L, " << ql.clamp.lo
          << ", " << ql.clamp.hi << ");\n";
        break;
      case OpKind::global_avg_pool:
        c << "tb_global_avg_pool(" << at(l.inputs[0]) << ", " << in.height << ", " << in.width << ", " << in.channels
          << ", " << at(l.output) << ");\n";
        break;
      case OpKind::residual_add: {
        const QuantParams& qb = qm.params(l.inputs[1]);
        c << "tb_residual_add(" << at(l.inputs[0]) << ", " << at(l.inputs[1]) << ", " << at(l.output) << ", "
          << in.elements() << "L, " << qin.zero_point << ", " << ql.multiplier.mantissa_q31 << ", "
          << ql.multiplier.shift << ", " << qb.zero_point << ", " << ql.multiplier_b.mantissa_q31 << ", "
          << ql.multiplier_b.shift << ", " << qout.zero_point << ");\n";
        break;
      }
      case OpKind::argmax_head:
        c << "tb_arena[" << plan.offsets.at(l.output) << "] = (int8_t)tb_argmax(" << at(l.inputs[0]) << ", "
          << in.elements() << ");\n";
        break;
    }
  }
  c << "    for (i = 0; i < TB_OUTPUT_SIZE; ++i) {\n        out[i] = (signed char)tb_arena[" << plan.offsets.at(logits)
    << " + i];\n    }\n"
    << "    pred = tb_argmax(" << at(logits) << ", TB_OUTPUT_SIZE);\n    return pred;\n}\n";
  bundle.source = c.str();
  bundle.golden = emit_golden_vectors(qm, opts.golden_count, opts.golden_seed);
  return bundle;
}

}  // namespace tinybatt

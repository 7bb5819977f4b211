// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"

namespace tinybatt {
namespace {

const RequantMultiplier kHalf{1073741824, 0};      // 0.5
const RequantMultiplier kThreeEighths{1610612736, 1};  // 0.375

IntTensor tensor(Shape s, std::vector<std::int8_t> data, QuantParams qp = {1.0, 0, false}) {
  return {s, std::move(data), qp};
}

TEST(Requantize, WorkedExamples) {
  EXPECT_EQ(requantize(0, kThreeEighths, 0), 0);
  EXPECT_EQ(requantize(100, kHalf, 0), 50);
  EXPECT_EQ(requantize(1000000, kThreeEighths, 0), 127);
  EXPECT_EQ(requantize(-1000000, kThreeEighths, 0), -128);
}

TEST(Requantize, RoundsHalfAwayAndAddsZeroPoint) {
  EXPECT_EQ(requantize(35, kHalf, 0), 18);
  EXPECT_EQ(requantize(-35, kHalf, 0), -18);
  EXPECT_EQ(requantize(35, kHalf, -100), -82);
  EXPECT_EQ(requantize(35, kHalf, 0, {0, 10}), 10);
}

TEST(Requantize, MatchesExactRationalRounding) {
  Rng rng(6);
  for (int i = 0; i < 20000; ++i) {
    const auto rm = derive_requant(std::exp(rng.uniform(-12, -0.01)));
    const auto acc = static_cast<std::int32_t>(rng.uniform(-2e6, 2e6));
    // acc * mantissa fits in long double's 64-bit significand exactly.
    const long double exact =
        std::ldexp(static_cast<long double>(acc) * rm.mantissa_q31, -(31 + rm.shift));
    const long double rounded = exact >= 0 ? std::floor(exact + 0.5L) : -std::floor(-exact + 0.5L);
    ASSERT_EQ(rescale(acc, rm), static_cast<std::int32_t>(rounded)) << acc;
  }
}

TEST(Requantize, Monotone) {
  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const auto rm = derive_requant(std::exp(rng.uniform(-10, -0.01)));
    const int zp = static_cast<int>(rng.below(256)) - 128;
    auto a = static_cast<std::int32_t>(rng.uniform(-1e5, 1e5));
    auto b = static_cast<std::int32_t>(rng.uniform(-1e5, 1e5));
    if (a > b) std::swap(a, b);
    ASSERT_LE(requantize(a, rm, zp), requantize(b, rm, zp));
  }
}

TEST(Conv2dInt, HandComputedSinglePixel) {
  const auto out = conv2d_int(tensor({1, 1, 1}, {10}), std::vector<std::int8_t>{3}, std::vector<std::int32_t>{5}, 1,
                              {1, 1, Padding::same}, kHalf, {1.0, 0, false}, {});
  EXPECT_EQ(out.data, (std::vector<std::int8_t>{18}));
}

TEST(Conv2dInt, IdentityConfiguration) {
  // w = 2 with M = 0.5 realizes an exact identity when zero points agree.
  const QuantParams qp{0.1, -7, false};
  std::vector<std::int8_t> x;
  for (int i = -128; i < 128; ++i) x.push_back(static_cast<std::int8_t>(i));
  const auto in = tensor({16, 16, 1}, x, qp);
  const auto out = conv2d_int(in, std::vector<std::int8_t>{2}, std::vector<std::int32_t>{0}, 1, {1, 1, Padding::same},
                              kHalf, qp, {});
  EXPECT_EQ(out.data, x);
}

TEST(Conv2dInt, ZeroInputGivesOutputZeroPoint) {
  const auto in = tensor({4, 4, 2}, std::vector<std::int8_t>(32, 0));
  std::vector<std::int8_t> w(3 * 3 * 3 * 2, 5);
  const QuantParams out_qp{1.0, 17, false};
  const auto out = conv2d_int(in, w, std::vector<std::int32_t>{0, 0, 0}, 3, {3, 1, Padding::same}, kHalf, out_qp, {});
  for (auto v : out.data) EXPECT_EQ(v, 17);
}

TEST(Conv2dInt, OverflowIsAnError) {
  const auto in = tensor({1, 1, 1}, {127});
  EXPECT_THROW(conv2d_int(in, std::vector<std::int8_t>{127}, std::vector<std::int32_t>{std::numeric_limits<std::int32_t>::max() - 10}, 1,
                          {1, 1, Padding::same}, kHalf, {1.0, 0, false}, {}),
               OverflowError);
}

TEST(DepthwiseInt, IdentityAtKernelOne) {
  const QuantParams qp{0.5, 3, false};
  std::vector<std::int8_t> x{1, -5, 100, -128, 127, 0};
  const auto out = depthwise_conv2d_int(tensor({1, 2, 3}, x, qp), std::vector<std::int8_t>{2, 2, 2},
                                        std::vector<std::int32_t>{0, 0, 0}, {1, 1, Padding::same}, kHalf, qp, {});
  EXPECT_EQ(out.data, x);
}

TEST(DepthwiseInt, ConstantPlaneClosedForm) {
  const int c = 9, zp = -3;
  const std::vector<std::int8_t> w{1, 2, 3, -4, 5, 6, 7, -8, 9};
  const int wsum = 21;
  const std::int32_t bias = 40;
  const auto rm = derive_requant(1.0 / 16.0);
  const auto out = depthwise_conv2d_int(tensor({5, 5, 1}, std::vector<std::int8_t>(25, c), {1.0, zp, false}), w,
                                        std::vector<std::int32_t>{bias}, {3, 1, Padding::same}, rm, {1.0, 0, false},
                                        {});
  const auto expect = requantize((c - zp) * wsum + bias, rm, 0);
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 4; ++x) EXPECT_EQ(out.data[y * 5 + x], expect);
}

TEST(DepthwiseInt, StrideTwoShape) {
  const auto out = depthwise_conv2d_int(tensor({7, 8, 2}, std::vector<std::int8_t>(112, 1)),
                                        std::vector<std::int8_t>(18, 1), std::vector<std::int32_t>{0, 0},
                                        {3, 2, Padding::same}, kHalf, {1.0, 0, false}, {});
  EXPECT_EQ(out.shape, (Shape{4, 4, 2}));
}

TEST(ResidualAddInt, ZeroOperandPassesOther) {
  const QuantParams qa{0.1, 5, false}, qb{0.2, -20, false}, qo{0.3, 2, false};
  const auto rm_a = derive_requant(qa.scale / qo.scale), rm_b = derive_requant(qb.scale / qo.scale);
  std::vector<std::int8_t> a{-128, -50, 0, 5, 60, 127};
  const auto out = residual_add_int(tensor({1, 1, 6}, a, qa), tensor({1, 1, 6}, std::vector<std::int8_t>(6, -20), qb),
                                    rm_a, rm_b, qo);
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(out.data[i], clamp_to<std::int8_t>(rescale(a[i] - 5, rm_a) + 2, -128, 127));
}

TEST(ResidualAddInt, EqualOperandsDouble) {
  const QuantParams q{0.1, 0, false}, qo{0.25, 0, false};
  const auto rm = derive_requant(0.4);
  std::vector<std::int8_t> a;
  for (int v = -50; v <= 50; ++v) a.push_back(static_cast<std::int8_t>(v));
  const auto ta = tensor({1, 1, static_cast<int>(a.size())}, a, q);
  const auto out = residual_add_int(ta, ta, rm, rm, qo);
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_LE(std::fabs(dequantize_value(out.data[i], qo) - 2 * dequantize_value(a[i], q)), qo.scale);
}

TEST(ResidualAddInt, Saturates) {
  const QuantParams q{1.0, 0, false};
  const auto rm = derive_requant(0.9);
  const auto t = tensor({1, 1, 1}, {127}, q);
  EXPECT_EQ(residual_add_int(t, t, rm, rm, q).data[0], 127);
  EXPECT_THROW(residual_add_int(t, tensor({1, 1, 2}, {1, 1}, q), rm, rm, q), GraphError);
}

TEST(GlobalAvgPoolInt, WorkedExamples) {
  const QuantParams qp{0.7, 4, false};
  auto constant = global_avg_pool_int(tensor({3, 3, 1}, std::vector<std::int8_t>(9, -77), qp));
  EXPECT_EQ(constant.data[0], -77);
  EXPECT_EQ(constant.qparams, qp);
  EXPECT_EQ(global_avg_pool_int(tensor({2, 2, 1}, {0, 0, 0, 2})).data[0], 1);
  EXPECT_EQ(global_avg_pool_int(tensor({2, 2, 1}, {-1, 0, 0, 0})).data[0], 0);
  EXPECT_EQ(global_avg_pool_int(tensor({2, 2, 1}, {-2, 0, 0, 0})).data[0], -1);
}

TEST(Relu6Int, Clamps) {
  const auto out = relu6_int(tensor({1, 1, 4}, {-128, -10, 50, 127}), {-10, 40});
  EXPECT_EQ(out.data, (std::vector<std::int8_t>{-10, -10, 40, 40}));
}

// Layer-wise integer/float consistency. The float reference runs on the
// dequantized inputs, weights and biases, so the only difference left is the
// single output requantization (at most one output step plus rounding).
double clamp_real(double y, const QuantParams& qp) {
  return std::clamp(y, (kQMin - qp.zero_point) * qp.scale, (kQMax - qp.zero_point) * qp.scale);
}

TEST(IntFloatConsistency, RandomConvLayers) {
  Rng rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    const bool depthwise = trial % 3 == 0;
    const int k = trial % 2 ? 3 : 1, stride = 1 + trial % 2 * (trial % 4 == 1);
    const Shape in_shape{static_cast<int>(3 + rng.below(4)), static_cast<int>(3 + rng.below(4)),
                         static_cast<int>(1 + rng.below(4))};
    const int oc = depthwise ? in_shape.channels : static_cast<int>(1 + rng.below(4));
    const QuantParams in_qp{std::exp(rng.uniform(-5, -1)), static_cast<int>(rng.below(200)) - 100, false};
    const QuantParams w_qp{std::exp(rng.uniform(-6, -2)), 0, true};
    IntTensor x{in_shape, std::vector<std::int8_t>(in_shape.elements()), in_qp};
    for (auto& v : x.data) v = rng.int8();
    std::vector<std::int8_t> w(static_cast<std::size_t>(depthwise ? k * k * oc : oc * k * k * in_shape.channels));
    for (auto& v : w) v = static_cast<std::int8_t>(static_cast<int>(rng.below(255)) - 127);
    std::vector<std::int32_t> bias(static_cast<std::size_t>(oc));
    for (auto& b : bias) b = static_cast<std::int32_t>(rng.uniform(-500, 500));

    // Float reference.
    GraphBuilder gb("ref", in_shape);
    if (depthwise) gb.depthwise_conv2d("c", "input", k, stride);
    else gb.conv2d("c", "input", oc, k, stride);
    const auto g = std::move(gb).build(0);
    const double bias_scale = in_qp.scale * w_qp.scale;
    WeightStore ws{{"c.weight", dequantize_tensor(w, w_qp)}, {"c.bias", {}}};
    for (auto b : bias) ws["c.bias"].push_back(static_cast<float>(b * bias_scale));
    const auto y = run_float(g, ws, dequantize_tensor(x.data, in_qp));
    auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    QuantParams out_qp = compute_qparams(*lo, *hi, QuantMode::asymmetric);
    out_qp = detail::widen_to_scale(out_qp, bias_scale);
    const auto rm = derive_requant(in_qp.scale, w_qp.scale, out_qp.scale);
    const auto out = conv2d_int(x, w, bias, oc, {k, stride, Padding::same}, rm, out_qp, {}, depthwise);
    ASSERT_EQ(out.data.size(), y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
      ASSERT_LE(std::fabs(dequantize_value(out.data[i], out_qp) - clamp_real(y[i], out_qp)), out_qp.scale * 2)
          << "trial " << trial << " element " << i;
  }
}

TEST(IntFloatConsistency, RandomResidualAdds) {
  Rng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const QuantParams qa{std::exp(rng.uniform(-5, 0)), static_cast<int>(rng.below(200)) - 100, false};
    const QuantParams qb{std::exp(rng.uniform(-5, 0)), static_cast<int>(rng.below(200)) - 100, false};
    IntTensor a{{1, 1, 16}, std::vector<std::int8_t>(16), qa}, b{{1, 1, 16}, std::vector<std::int8_t>(16), qb};
    for (auto& v : a.data) v = rng.int8();
    for (auto& v : b.data) v = rng.int8();
    std::vector<double> y(16);
    for (int i = 0; i < 16; ++i) y[i] = dequantize_value(a.data[i], qa) + dequantize_value(b.data[i], qb);
    auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const auto qo = detail::widen_to_scale(compute_qparams(*lo, *hi, QuantMode::asymmetric), std::max(qa.scale, qb.scale));
    const auto out = residual_add_int(a, b, derive_requant(qa.scale / qo.scale), derive_requant(qb.scale / qo.scale), qo);
    // Two requantized operands, one LSB slack each.
    for (int i = 0; i < 16; ++i)
      ASSERT_LE(std::fabs(dequantize_value(out.data[i], qo) - clamp_real(y[i], qo)), qo.scale * 2) << trial;
  }
}

TEST(RunInt, DeterministicAndInputChecked) {
  const auto m = fixtures::deepfish_tiny();
  const auto calib = fixtures::fixture_inputs(0, 16);
  const auto qm = quantize_model(m.graph, m.weights, collect_ranges(m.graph, m.weights, calib));
  const auto x = quantize_input(qm, fixtures::fixture_input(9));
  const auto a = run_int(qm, x), b = run_int(qm, x);
  EXPECT_EQ(a.logits.data, b.logits.data);
  EXPECT_EQ(a.predicted, b.predicted);
  EXPECT_EQ(a.logits.data.size(), 2u);
  EXPECT_EQ(a.predicted, argmax(std::span<const std::int8_t>(a.logits.data)));
  IntTensor short_input = x;
  short_input.data.pop_back();
  EXPECT_THROW(run_int(qm, short_input), ParameterError);
}

}  // namespace
}  // namespace tinybatt

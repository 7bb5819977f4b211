// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

namespace tinybatt {
namespace {

TEST(ComputeQparams, WorkedExamples) {
  const auto a = compute_qparams(0, 6, QuantMode::asymmetric);
  EXPECT_DOUBLE_EQ(a.scale, 6.0 / 255.0);
  EXPECT_EQ(a.zero_point, -128);
  const auto s = compute_qparams(-1, 1, QuantMode::symmetric);
  EXPECT_DOUBLE_EQ(s.scale, 1.0 / 127.0);
  EXPECT_EQ(s.zero_point, 0);
  EXPECT_TRUE(s.symmetric);
  for (auto mode : {QuantMode::asymmetric, QuantMode::symmetric}) {
    const auto d = compute_qparams(0, 0, mode);
    EXPECT_EQ(d.scale, 1.0);
    EXPECT_EQ(d.zero_point, 0);
  }
}

TEST(ComputeQparams, EndpointsMapToIntegerRange) {
  // Solving q = x/s + zp at both ends of (-2, 6): s = 8/255, zp = -128 + 2/s.
  const auto q = compute_qparams(-2, 6, QuantMode::asymmetric);
  EXPECT_DOUBLE_EQ(q.scale, 8.0 / 255.0);
  EXPECT_EQ(q.zero_point, static_cast<int>(std::round(-128 + 2.0 / (8.0 / 255.0))));
  EXPECT_EQ(quantize_value(-2, q), -128);
  EXPECT_EQ(quantize_value(6, q), 127);
}

TEST(ComputeQparams, WidensToIncludeZero) {
  const auto q = compute_qparams(3, 3, QuantMode::asymmetric);
  EXPECT_DOUBLE_EQ(q.scale, 3.0 / 255.0);
  EXPECT_EQ(q.zero_point, -128);
  const auto n = compute_qparams(-4, -1, QuantMode::asymmetric);
  EXPECT_EQ(n.zero_point, 127);
  EXPECT_EQ(quantize_value(0.0, n), 127);
}

TEST(ComputeQparams, Errors) {
  EXPECT_THROW(compute_qparams(1, 0, QuantMode::asymmetric), ParameterError);
  EXPECT_THROW(compute_qparams(0, INFINITY, QuantMode::asymmetric), ParameterError);
  EXPECT_THROW(compute_qparams(NAN, 1, QuantMode::symmetric), ParameterError);
}

TEST(QuantizeTensor, WorkedExamples) {
  const QuantParams half{0.5, 0, true};
  EXPECT_EQ(quantize_tensor(std::vector<float>{1.0f, 200.0f}, half), (std::vector<std::int8_t>{2, 127}));
  const QuantParams unit{1.0 / 127.0, 0, true};
  EXPECT_EQ(quantize_tensor(std::vector<float>{1.0f}, unit), (std::vector<std::int8_t>{127}));
  EXPECT_EQ(quantize_tensor(std::vector<float>{-1000.0f}, half), (std::vector<std::int8_t>{-128}));
}

TEST(DequantizeTensor, WorkedExamples) {
  EXPECT_EQ(dequantize_tensor(std::vector<std::int8_t>{0}, {0.5, 0, false})[0], 0.0f);
  EXPECT_FLOAT_EQ(dequantize_tensor(std::vector<std::int8_t>{127}, {1.0 / 127.0, 0, true})[0], 1.0f);
  EXPECT_EQ(dequantize_tensor(std::vector<std::int8_t>{-128}, {6.0 / 255.0, -128, false})[0], 0.0f);
  EXPECT_THROW(dequantize_tensor(std::vector<std::int8_t>{0}, {0.0, 0, false}), ParameterError);
}

TEST(QuantizeTensor, MonotoneInX) {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const QuantParams qp{std::exp(rng.uniform(-8, 2)), static_cast<int>(rng.below(256)) - 128, false};
    double prev_x = -1e9;
    int prev_q = -129;
    for (int i = 0; i < 200; ++i) {
      const double x = prev_x < -1e8 ? rng.uniform(-300, 300) * qp.scale : prev_x + rng.uniform(0, 3) * qp.scale;
      const int q = quantize_value(x, qp);
      ASSERT_GE(q, prev_q);
      prev_x = x;
      prev_q = q;
    }
  }
}

TEST(QuantizeTensor, RoundTripWithinHalfStep) {
  Rng rng(21);
  for (int i = 0; i < 20000; ++i) {
    const QuantParams qp{std::exp(rng.uniform(-10, 3)), static_cast<int>(rng.below(256)) - 128, false};
    const double lo = (kQMin - qp.zero_point) * qp.scale, hi = (kQMax - qp.zero_point) * qp.scale;
    const double x = rng.uniform(lo, hi);
    ASSERT_LE(std::fabs(x - dequantize_value(quantize_value(x, qp), qp)), qp.scale / 2);
  }
}

TEST(DeriveRequant, WorkedExamples) {
  EXPECT_EQ(derive_requant(0.375), (RequantMultiplier{1610612736, 1}));
  EXPECT_EQ(derive_requant(0.5), (RequantMultiplier{1073741824, 0}));
  EXPECT_THROW(derive_requant(1.0), RangeError);
  EXPECT_THROW(derive_requant(0.0), RangeError);
  EXPECT_THROW(derive_requant(-0.5), RangeError);
  EXPECT_EQ(derive_requant(0.5, 0.5, 0.5), (RequantMultiplier{1073741824, 0}));
  EXPECT_THROW(derive_requant(1.0, 1.0, 0.5), RangeError);
}

TEST(DeriveRequant, MantissaNormalizedAndPrecise) {
  Rng rng(4);
  for (int i = 0; i < 5000; ++i) {
    const double m = std::ldexp(1.0, -16) * std::pow(2.0, 16 * rng.uniform());
    if (m >= 1.0) continue;
    const auto rm = derive_requant(m);
    ASSERT_GE(rm.mantissa_q31, 1 << 30);
    ASSERT_GE(rm.shift, 0);
    ASSERT_LE(std::fabs(rm.realized() - m) / m, std::ldexp(1.0, -30));
  }
}

TEST(DeriveRequant, JustBelowOneRoundsUpIntoRangeError) {
  // 1 - 2^-40 has a Q31 mantissa that rounds to 2^31, i.e. M = 1.
  EXPECT_THROW(derive_requant(1.0 - std::ldexp(1.0, -40)), RangeError);
}

ModelGraph identity_conv_graph() {
  GraphBuilder b("ident", {1, 4, 1});
  b.conv2d("c", "input", 1, 1);
  return std::move(b).build(0);
}

TEST(CollectRanges, SingleRelu) {
  GraphBuilder b("r", {1, 3, 1});
  b.relu6("r", "input");
  const auto g = std::move(b).build(0);
  const std::vector<std::vector<float>> in{{3, 3, 3}};
  const auto r = collect_ranges(g, {}, in);
  EXPECT_EQ(r.at("r"), (Range{3.0, 3.0}));
}

TEST(CollectRanges, MergesAcrossInputs) {
  const auto g = identity_conv_graph();
  WeightStore w{{"c.weight", {1}}, {"c.bias", {0}}};
  const std::vector<std::vector<float>> in{{-1, 0, 1, 2}, {0, 5, 1, 2}};
  const auto r = collect_ranges(g, w, in);
  EXPECT_EQ(r.at("c"), (Range{-1.0, 5.0}));
  EXPECT_EQ(r.at("c.weight"), (Range{1.0, 1.0}));
}

TEST(CollectRanges, EmptySetIsAnError) {
  EXPECT_THROW(collect_ranges(identity_conv_graph(), {}, std::span<const std::vector<float>>{}), ParameterError);
}

TEST(CollectRanges, FixtureMatchesReplay) {
  const auto m = fixtures::deepfish_tiny();
  const auto inputs = fixtures::fixture_inputs(100, 16);
  const auto ranges = collect_ranges(m.graph, m.weights, inputs);
  const auto replay = oracle::replay_ranges(m.graph, m.weights, inputs);
  for (const auto& t : m.graph.tensors) {
    ASSERT_TRUE(ranges.contains(t.name)) << t.name;
    EXPECT_EQ(ranges.at(t.name), replay.at(t.name)) << t.name;
  }
  for (const auto& [name, values] : m.weights) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    EXPECT_EQ(ranges.at(name), (Range{*lo, *hi})) << name;
  }
}

TEST(CollectRanges, OrderAndWorkerInsensitive) {
  const auto m = fixtures::deepfish_tiny();
  auto inputs = fixtures::fixture_inputs(200, 12);
  const auto base = collect_ranges(m.graph, m.weights, inputs, 1);
  Rng rng(77);
  for (unsigned workers : {2u, 3u, 5u}) {
    rng.shuffle(std::span<std::vector<float>>(inputs));
    EXPECT_EQ(collect_ranges(m.graph, m.weights, inputs, workers), base) << workers;
  }
}

TEST(RangesFile, RoundTrip) {
  CalibrationRanges r{{"a", {-1.5, 2.25}}, {"b", {0, 0}}};
  EXPECT_EQ(ranges_from_json(ranges_to_json(r)), r);
  EXPECT_THROW(ranges_from_json(json{{"a", {2, 1}}}), ParameterError);
}

class FixtureQuantization : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = new fixtures::FloatModel(fixtures::deepfish_tiny());
    const auto calib = fixtures::fixture_inputs(0, 64);
    ranges_ = new CalibrationRanges(collect_ranges(model_->graph, model_->weights, calib));
    qm_ = new QuantizedModel(quantize_model(model_->graph, model_->weights, *ranges_));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete ranges_;
    delete qm_;
  }
  static fixtures::FloatModel* model_;
  static CalibrationRanges* ranges_;
  static QuantizedModel* qm_;
};
fixtures::FloatModel* FixtureQuantization::model_ = nullptr;
CalibrationRanges* FixtureQuantization::ranges_ = nullptr;
QuantizedModel* FixtureQuantization::qm_ = nullptr;

TEST_F(FixtureQuantization, EveryTensorHasParamsAndBiasScalesAreExact) {
  const auto& g = qm_->graph;
  for (const auto& t : g.tensors) {
    ASSERT_TRUE(qm_->qparams.contains(t.name)) << t.name;
    EXPECT_TRUE(qm_->params(t.name).valid());
    EXPECT_EQ(t.element, ElementType::int8);
  }
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    if (!l.has_parameters()) continue;
    const auto& wq = qm_->params(l.weight_name());
    EXPECT_TRUE(wq.symmetric);
    EXPECT_EQ(wq.zero_point, 0);
    EXPECT_EQ(qm_->layers[i].bias_scale, qm_->params(l.inputs[0]).scale * wq.scale) << l.name;
    for (auto w : qm_->layers[i].weights) EXPECT_GE(w, -127);
  }
}

TEST_F(FixtureQuantization, Relu6IsFusedIntoProducerClamp) {
  const auto& g = qm_->graph;
  int fused = 0;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    if (l.kind != OpKind::relu6) continue;
    const auto& producer_idx = *std::find_if(g.layers.begin(), g.layers.end(),
                                             [&](const Layer& p) { return p.output == l.inputs[0]; });
    const std::size_t p = static_cast<std::size_t>(&producer_idx - g.layers.data());
    const auto& qp = qm_->params(l.output);
    EXPECT_EQ(qm_->params(l.inputs[0]), qp);
    const ClampRange expect{std::max(-128, qp.zero_point), quantize_value(6.0, qp)};
    EXPECT_EQ(qm_->layers[p].clamp, expect) << g.layers[p].name;
    EXPECT_EQ(qm_->layers[i].clamp, expect);
    ++fused;
  }
  EXPECT_EQ(fused, 9);
}

TEST_F(FixtureQuantization, MultipliersAreBelowOne) {
  for (const auto& ql : qm_->layers) {
    if (ql.multiplier.mantissa_q31) EXPECT_LT(ql.multiplier.realized(), 1.0);
    if (ql.multiplier_b.mantissa_q31) EXPECT_LT(ql.multiplier_b.realized(), 1.0);
  }
}

TEST_F(FixtureQuantization, WeightBytesAreOnePerParameter) {
  std::size_t float_weights = 0, float_bias = 0;
  for (const auto& l : model_->graph.layers)
    if (l.has_parameters()) {
      float_weights += model_->weights.at(l.weight_name()).size();
      float_bias += model_->weights.at(l.bias_name()).size();
    }
  EXPECT_EQ(qm_->weight_bytes(), float_weights);
  EXPECT_EQ(4 * qm_->weight_bytes(), float_weights * sizeof(float));
  EXPECT_EQ(qm_->bias_bytes(), float_bias * 4);
}

TEST_F(FixtureQuantization, MissingRangeNamesTensor) {
  auto partial = *ranges_;
  partial.erase("block2.depthwise_relu");
  try {
    quantize_model(model_->graph, model_->weights, partial);
    FAIL();
  } catch (const QuantizationError& e) {
    EXPECT_NE(std::string(e.what()).find("block2.depthwise_relu"), std::string::npos) << e.what();
  }
}

TEST(QuantizeModel, MultiplierFailureNamesLayer) {
  // Hand-built qparams with s_in*s_w/s_out > 1 must be rejected per layer.
  const auto g = identity_conv_graph();
  std::map<std::string, QuantParams> qp{{"input", {1.0, 0, false}}, {"c", {0.001, 0, false}},
                                        {"c.weight", {1.0, 0, true}}};
  try {
    assemble_quantized(g, qp, {{"c.weight", {1}}}, {{"c.bias", {0}}});
    FAIL();
  } catch (const QuantizationError& e) {
    EXPECT_NE(std::string(e.what()).find("'c'"), std::string::npos) << e.what();
  }
}

TEST(QuantizeModel, SmallOutputRangeIsWidenedNotRejected) {
  // Output range far narrower than s_in*s_w: the output scale is enlarged so
  // the multiplier stays below one.
  const auto g = identity_conv_graph();
  WeightStore w{{"c.weight", {0.001f}}, {"c.bias", {0}}};
  const std::vector<std::vector<float>> in{{0, 10, 20, 30}};
  const auto qm = quantize_model(g, w, collect_ranges(g, w, in));
  EXPECT_LT(qm.layers[0].multiplier.realized(), 1.0);
  const auto s_needed = qm.params("input").scale * qm.params("c.weight").scale;
  EXPECT_GT(qm.params("c").scale, s_needed);
}

}  // namespace
}  // namespace tinybatt

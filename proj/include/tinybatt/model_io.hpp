// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Model manifest (JSON) and weight blob (raw little-endian) persistence,
// plus the calibration-ranges cache.
//
// Blob layout: for every parameterized layer in manifest order, the weight
// tensor then the bias tensor. Float models store both as IEEE-754 binary32;
// quantized models store weights as int8 and biases as int32.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "tinybatt/engine_float.hpp"
#include "tinybatt/error.hpp"
#include "tinybatt/model_ir.hpp"
#include "tinybatt/quantizer.hpp"

namespace tinybatt {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

using json = nlohmann::json;

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void write_text(const std::filesystem::path& p, std::string_view text) {
  write_file(p, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string read_text(const std::filesystem::path& p) {
  auto bytes = read_file(p);
  return {bytes.begin(), bytes.end()};
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, std::span<const T> values) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
  out.insert(out.end(), p, p + values.size_bytes());
}

template <typename T>
std::vector<T> take_le(std::span<const std::uint8_t> blob, std::size_t& offset, std::size_t count,
                       const std::string& what) {
  const std::size_t bytes = count * sizeof(T);
  if (offset + bytes > blob.size()) throw IoError("weight blob truncated while reading '" + what + "'");
  std::vector<T> v(count);
  std::memcpy(v.data(), blob.data() + offset, bytes);
  offset += bytes;
  return v;
}

inline json layer_to_json(const Layer& l) {
  json j{{"name", l.name}, {"op", std::string(to_string(l.kind))}, {"inputs", l.inputs}, {"output", l.output}};
  if (l.kind == OpKind::conv2d || l.kind == OpKind::depthwise_conv2d) {
    j["kernel"] = l.kernel;
    j["stride"] = l.stride;
    j["padding"] = std::string(to_string(l.padding));
  }
  if (l.kind == OpKind::conv2d || l.kind == OpKind::fully_connected) j["out_channels"] = l.out_channels;
  if (l.expansion != 0) j["expansion"] = l.expansion;
  return j;
}

inline Layer layer_from_json(const json& j) {
  Layer l;
  l.name = j.at("name").get<std::string>();
  l.kind = parse_op_kind(j.at("op").get<std::string>());
  l.inputs = j.at("inputs").get<std::vector<std::string>>();
  l.output = j.value("output", l.name);
  l.kernel = j.value("kernel", 1);
  l.stride = j.value("stride", 1);
  l.padding = parse_padding(j.value("padding", std::string("same")));
  l.out_channels = j.value("out_channels", 0);
  l.expansion = j.value("expansion", 0);
  return l;
}

// Graph structure only. Tensor shapes other than the input are re-derived on
// load.
inline json graph_to_json(const ModelGraph& g) {
  const auto& in = g.tensor(g.input);
  json layers = json::array();
  for (const auto& l : g.layers) layers.push_back(layer_to_json(l));
  return json{{"name", g.name},
              {"input", {{"name", in.name}, {"shape", {in.shape.height, in.shape.width, in.shape.channels}}}},
              {"layers", layers},
              {"output", g.output},
              {"classes", g.classes}};
}

inline ModelGraph graph_from_json(const json& j) {
  ModelGraph g;
  g.name = j.value("name", std::string("model"));
  const auto& in = j.at("input");
  g.input = in.at("name").get<std::string>();
  const auto shape = in.at("shape").get<std::vector<int>>();
  if (shape.size() != 3) throw ParameterError("input shape must be [height, width, channels]");
  g.tensors.push_back({g.input, {shape[0], shape[1], shape[2]}, ElementType::real32});
  for (const auto& lj : j.at("layers")) {
    Layer l = layer_from_json(lj);
    g.tensors.push_back({l.output, Shape{}, ElementType::real32});
    g.layers.push_back(std::move(l));
  }
  g.output = j.value("output", g.layers.empty() ? g.input : g.layers.back().output);
  g.classes = j.value("classes", 0);
  auto violations = validate_graph(g);
  if (!violations.empty()) {
    std::string msg = "manifest graph is invalid:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw GraphError(msg);
  }
  return infer_shapes(std::move(g));
}

inline json qparams_to_json(const QuantParams& q) {
  return json{{"scale", q.scale}, {"zero_point", q.zero_point}, {"symmetric", q.symmetric}};
}

inline QuantParams qparams_from_json(const json& j) {
  return {j.at("scale").get<double>(), j.at("zero_point").get<int>(), j.value("symmetric", false)};
}

inline std::vector<std::uint8_t> float_blob(const ModelGraph& g, const WeightStore& w) {
  std::vector<std::uint8_t> blob;
  for (const auto& l : g.layers) {
    if (!l.has_parameters()) continue;
    append_le<float>(blob, detail::lookup_weights(w, l.weight_name(), weight_count(l)));
    append_le<float>(blob, detail::lookup_weights(w, l.bias_name(), bias_count(l)));
  }
  return blob;
}

inline std::vector<std::uint8_t> quantized_blob(const QuantizedModel& qm) {
  std::vector<std::uint8_t> blob;
  for (std::size_t i = 0; i < qm.graph.layers.size(); ++i) {
    if (!qm.graph.layers[i].has_parameters()) continue;
    append_le<std::int8_t>(blob, qm.layers[i].weights);
    append_le<std::int32_t>(blob, qm.layers[i].bias);
  }
  return blob;
}

inline json float_manifest(const ModelGraph& g, const std::string& blob_name) {
  json j = graph_to_json(g);
  j["weights_blob"] = blob_name;
  j["quantized"] = false;
  return j;
}

inline json quantized_manifest(const QuantizedModel& qm, const std::string& blob_name) {
  json j = graph_to_json(qm.graph);
  j["weights_blob"] = blob_name;
  j["quantized"] = true;
  json q = json::object();
  for (const auto& [name, p] : qm.qparams) q[name] = qparams_to_json(p);
  j["qparams"] = q;
  return j;
}

// Writes "<stem>.json" and "<stem>.bin" side by side; returns the manifest path.
inline std::filesystem::path save_float_model(const std::filesystem::path& manifest_path, const ModelGraph& g,
                                              const WeightStore& w) {
  auto blob_path = std::filesystem::path(manifest_path).replace_extension(".bin");
  write_file(blob_path, float_blob(g, w));
  write_text(manifest_path, float_manifest(g, blob_path.filename().string()).dump(2) + "\n");
  return manifest_path;
}

inline std::filesystem::path save_quantized_model(const std::filesystem::path& manifest_path,
                                                  const QuantizedModel& qm) {
  auto blob_path = std::filesystem::path(manifest_path).replace_extension(".bin");
  write_file(blob_path, quantized_blob(qm));
  write_text(manifest_path, quantized_manifest(qm, blob_path.filename().string()).dump(2) + "\n");
  return manifest_path;
}

struct LoadedModel {
  ModelGraph graph;
  std::optional<WeightStore> weights;        // float models
  std::optional<QuantizedModel> quantized;   // quantized models

  bool is_quantized() const { return quantized.has_value(); }
};

inline LoadedModel load_model(const std::filesystem::path& manifest_path) {
  json j;
  try {
    j = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw IoError("cannot parse manifest '" + manifest_path.string() + "': " + e.what());
  }
  LoadedModel m;
  m.graph = graph_from_json(j);
  const auto blob_path = manifest_path.parent_path() / j.at("weights_blob").get<std::string>();
  const auto blob = read_file(blob_path);
  std::size_t offset = 0;
  if (j.value("quantized", false)) {
    std::map<std::string, QuantParams> qp;
    for (const auto& [name, v] : j.at("qparams").items()) qp[name] = qparams_from_json(v);
    std::map<std::string, std::vector<std::int8_t>> w;
    std::map<std::string, std::vector<std::int32_t>> b;
    for (const auto& l : m.graph.layers) {
      if (!l.has_parameters()) continue;
      w[l.weight_name()] = take_le<std::int8_t>(blob, offset, weight_count(l), l.weight_name());
      b[l.bias_name()] = take_le<std::int32_t>(blob, offset, bias_count(l), l.bias_name());
    }
    m.quantized = assemble_quantized(m.graph, std::move(qp), std::move(w), std::move(b));
    m.graph = m.quantized->graph;
  } else {
    WeightStore w;
    for (const auto& l : m.graph.layers) {
      if (!l.has_parameters()) continue;
      w[l.weight_name()] = take_le<float>(blob, offset, weight_count(l), l.weight_name());
      w[l.bias_name()] = take_le<float>(blob, offset, bias_count(l), l.bias_name());
    }
    m.weights = std::move(w);
  }
  if (offset != blob.size())
    throw IoError("weight blob '" + blob_path.string() + "' has " + std::to_string(blob.size() - offset) +
                  " trailing bytes");
  return m;
}

inline json ranges_to_json(const CalibrationRanges& r) {
  json j = json::object();
  for (const auto& [name, range] : r) j[name] = {range.min, range.max};
  return j;
}

inline CalibrationRanges ranges_from_json(const json& j) {
  CalibrationRanges r;
  for (const auto& [name, v] : j.items()) {
    Range range{v.at(0).get<double>(), v.at(1).get<double>()};
    if (!(range.min <= range.max)) throw ParameterError("range for '" + name + "' has min > max");
    r[name] = range;
  }
  return r;
}

// Raw little-endian real32 tensor file.
inline std::vector<float> read_tensor_file(const std::filesystem::path& p) {
  const auto bytes = read_file(p);
  if (bytes.size() % 4 != 0) throw IoError("tensor file '" + p.string() + "' size is not a multiple of 4");
  std::size_t offset = 0;
  return take_le<float>(bytes, offset, bytes.size() / 4, p.string());
}

inline void write_tensor_file(const std::filesystem::path& p, std::span<const float> t) {
  std::vector<std::uint8_t> bytes;
  append_le<float>(bytes, t);
  write_file(p, bytes);
}

}  // namespace tinybatt

// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Layer graph for small inverted-residual CNNs: tensor specs, the seven
// supported operators, shape inference, validation and a builder.
//
// Layout is height-width-channel, row-major, channel innermost. Parameter
// tensors are not graph tensors; they are addressed as "<layer>.weight" and
// "<layer>.bias".

#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tinybatt/error.hpp"

namespace tinybatt {

enum class ElementType { real32, int8 };

constexpr std::size_t element_bytes(ElementType t) { return t == ElementType::real32 ? 4 : 1; }

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  constexpr std::size_t elements() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  constexpr bool resolved() const { return height >= 1 && width >= 1 && channels >= 1; }
  friend constexpr auto operator<=>(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

struct TensorSpec {
  std::string name;
  Shape shape;
  ElementType element = ElementType::real32;

  std::size_t bytes() const { return shape.elements() * element_bytes(element); }
};

enum class OpKind {
  conv2d,
  depthwise_conv2d,
  fully_connected,
  relu6,
  global_avg_pool,
  residual_add,
  argmax_head,
};

enum class Padding { same, valid };

inline std::string_view to_string(OpKind k) {
  switch (k) {
    case OpKind::conv2d: return "conv2d";
    case OpKind::depthwise_conv2d: return "depthwise_conv2d";
    case OpKind::fully_connected: return "fully_connected";
    case OpKind::relu6: return "relu6";
    case OpKind::global_avg_pool: return "global_avg_pool";
    case OpKind::residual_add: return "residual_add";
    case OpKind::argmax_head: return "argmax_head";
  }
  return "?";
}

inline OpKind parse_op_kind(std::string_view s) {
  for (OpKind k : {OpKind::conv2d, OpKind::depthwise_conv2d, OpKind::fully_connected, OpKind::relu6,
                   OpKind::global_avg_pool, OpKind::residual_add, OpKind::argmax_head}) {
    if (to_string(k) == s) return k;
  }
  throw ParameterError("unknown layer op '" + std::string(s) + "'");
}

inline std::string_view to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

inline Padding parse_padding(std::string_view s) {
  if (s == "same") return Padding::same;
  if (s == "valid") return Padding::valid;
  throw ParameterError("unknown padding '" + std::string(s) + "'");
}

struct Layer {
  std::string name;
  OpKind kind = OpKind::conv2d;
  std::vector<std::string> inputs;
  std::string output;
  int kernel = 1;
  int stride = 1;
  Padding padding = Padding::same;
  int in_channels = 0;   // resolved by infer_shapes
  int out_channels = 0;  // required for conv2d and fully_connected
  int expansion = 0;     // informational, set on layers emitted by the block builder

  bool has_parameters() const {
    return kind == OpKind::conv2d || kind == OpKind::depthwise_conv2d ||
           kind == OpKind::fully_connected;
  }
  std::string weight_name() const { return name + ".weight"; }
  std::string bias_name() const { return name + ".bias"; }
};

// Weight element count for a parameterized layer with resolved channels.
// conv2d: [out][k][k][in]; depthwise: [k][k][c]; fully_connected: [out][in].
inline std::size_t weight_count(const Layer& l) {
  const auto k = static_cast<std::size_t>(l.kernel);
  const auto in = static_cast<std::size_t>(l.in_channels);
  const auto out = static_cast<std::size_t>(l.out_channels);
  switch (l.kind) {
    case OpKind::conv2d: return out * k * k * in;
    case OpKind::depthwise_conv2d: return k * k * in;
    case OpKind::fully_connected: return out * in;
    default: return 0;
  }
}

inline std::size_t bias_count(const Layer& l) {
  return l.has_parameters() ? static_cast<std::size_t>(l.out_channels) : 0;
}

// Output extent of a windowed op along one axis.
inline int window_output_extent(int in, int kernel, int stride, Padding padding) {
  if (padding == Padding::same) return (in + stride - 1) / stride;
  if (in < kernel) return 0;
  return (in - kernel) / stride + 1;
}

// Leading (top/left) zero padding; any odd remainder goes to bottom/right.
inline int window_pad_before(int in, int out, int kernel, int stride, Padding padding) {
  if (padding == Padding::valid) return 0;
  const int total = std::max((out - 1) * stride + kernel - in, 0);
  return total / 2;
}

struct ModelGraph {
  std::string name;
  std::string input;
  std::string output;
  std::vector<TensorSpec> tensors;
  std::vector<Layer> layers;
  std::vector<std::size_t> schedule;  // indices into layers, topological
  int classes = 0;

  const TensorSpec* find_tensor(std::string_view n) const {
    for (const auto& t : tensors)
      if (t.name == n) return &t;
    return nullptr;
  }
  TensorSpec* find_tensor(std::string_view n) {
    for (auto& t : tensors)
      if (t.name == n) return &t;
    return nullptr;
  }
  const TensorSpec& tensor(std::string_view n) const {
    if (const auto* t = find_tensor(n)) return *t;
    throw LookupError("unknown tensor '" + std::string(n) + "'");
  }
  const Layer* find_layer(std::string_view n) const {
    for (const auto& l : layers)
      if (l.name == n) return &l;
    return nullptr;
  }

  // Tensor that feeds the argmax head, or the graph output when there is none.
  std::string logits_tensor() const {
    for (const auto& l : layers)
      if (l.kind == OpKind::argmax_head && l.output == output) return l.inputs.front();
    return output;
  }
};

namespace detail {

inline std::optional<std::vector<std::size_t>> topological_order(const ModelGraph& g) {
  std::map<std::string, std::size_t> producer;
  for (std::size_t i = 0; i < g.layers.size(); ++i) producer.emplace(g.layers[i].output, i);
  std::vector<std::size_t> indegree(g.layers.size(), 0);
  std::vector<std::vector<std::size_t>> users(g.layers.size());
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    for (const auto& in : g.layers[i].inputs) {
      auto it = producer.find(in);
      if (it == producer.end()) continue;
      ++indegree[i];
      users[it->second].push_back(i);
    }
  }
  // Kahn's algorithm, always releasing the lowest-index ready layer so the
  // schedule follows declaration order where the edges allow it.
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < indegree.size(); ++i)
    if (indegree[i] == 0) ready.insert(i);
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(i);
    for (std::size_t u : users[i])
      if (--indegree[u] == 0) ready.insert(u);
  }
  if (order.size() != g.layers.size()) return std::nullopt;
  return order;
}

inline bool valid_kernel(int k) { return k == 1 || k == 3 || k == 5 || k == 7; }
inline bool valid_stride(int s) { return s == 1 || s == 2; }

}  // namespace detail

// Reports every structural violation found; an empty result means the graph
// is well formed.
inline std::vector<std::string> validate_graph(const ModelGraph& g) {
  std::vector<std::string> v;
  std::map<std::string, int> tensor_names;
  for (const auto& t : g.tensors) {
    if (++tensor_names[t.name] == 2) v.push_back("duplicate tensor name '" + t.name + "'");
    if ((t.shape.height != 0 || t.shape.width != 0 || t.shape.channels != 0) && !t.shape.resolved())
      v.push_back("tensor '" + t.name + "' has a non-positive dimension");
  }
  std::map<std::string, int> layer_names;
  std::map<std::string, int> produced;
  std::map<std::string, int> consumed;
  for (const auto& l : g.layers) {
    if (++layer_names[l.name] == 2) v.push_back("duplicate layer name '" + l.name + "'");
    for (const auto& in : l.inputs) {
      ++consumed[in];
      if (!tensor_names.contains(in))
        v.push_back("layer '" + l.name + "' consumes undefined tensor '" + in + "'");
    }
    if (!tensor_names.contains(l.output))
      v.push_back("layer '" + l.name + "' produces undefined tensor '" + l.output + "'");
    if (++produced[l.output] == 2)
      v.push_back("tensor '" + l.output + "' is produced by more than one layer");

    const std::size_t arity = l.kind == OpKind::residual_add ? 2 : 1;
    if (l.inputs.size() != arity)
      v.push_back("layer '" + l.name + "' expects " + std::to_string(arity) + " input(s), has " +
                  std::to_string(l.inputs.size()));
    if (l.kind == OpKind::conv2d || l.kind == OpKind::depthwise_conv2d) {
      if (!detail::valid_kernel(l.kernel))
        v.push_back("layer '" + l.name + "' kernel " + std::to_string(l.kernel) +
                    " not in {1,3,5,7}");
      if (!detail::valid_stride(l.stride))
        v.push_back("layer '" + l.name + "' stride " + std::to_string(l.stride) + " not in {1,2}");
    }
    if ((l.kind == OpKind::conv2d || l.kind == OpKind::fully_connected) && l.out_channels < 1)
      v.push_back("layer '" + l.name + "' needs out_channels >= 1");
    if (l.kind == OpKind::residual_add && l.inputs.size() == 2) {
      const auto* a = g.find_tensor(l.inputs[0]);
      const auto* b = g.find_tensor(l.inputs[1]);
      if (a && b && a->shape.resolved() && b->shape.resolved() && a->shape != b->shape)
        v.push_back("residual_add '" + l.name + "' operand shapes differ: '" + a->name + "' " +
                    to_string(a->shape) + " vs '" + b->name + "' " + to_string(b->shape));
    }
  }

  if (!tensor_names.contains(g.input)) v.push_back("graph input '" + g.input + "' is not declared");
  if (produced.contains(g.input)) v.push_back("graph input '" + g.input + "' is produced by a layer");
  if (!tensor_names.contains(g.output)) v.push_back("graph output '" + g.output + "' is not declared");
  for (const auto& [name, count] : tensor_names) {
    if (name != g.input && !produced.contains(name))
      v.push_back("dangling tensor '" + name + "' is never produced");
    if (name != g.output && !consumed.contains(name))
      v.push_back("dangling tensor '" + name + "' is never consumed");
  }

  if (!detail::topological_order(g)) v.push_back("graph contains a cycle");

  if (!g.schedule.empty()) {
    std::vector<std::size_t> sorted = g.schedule;
    std::sort(sorted.begin(), sorted.end());
    bool permutation = sorted.size() == g.layers.size();
    for (std::size_t i = 0; permutation && i < sorted.size(); ++i) permutation = sorted[i] == i;
    if (!permutation) {
      v.push_back("schedule is not a permutation of the layers");
    } else {
      std::set<std::string> available{g.input};
      for (std::size_t idx : g.schedule) {
        const auto& l = g.layers[idx];
        for (const auto& in : l.inputs)
          if (!available.contains(in) && tensor_names.contains(in))
            v.push_back("schedule runs '" + l.name + "' before '" + in + "' is produced");
        available.insert(l.output);
      }
    }
  }
  return v;
}

// Computes the schedule and resolves every tensor shape and layer channel
// count. Only the graph input shape needs to be given.
inline ModelGraph infer_shapes(ModelGraph g) {
  auto* input = g.find_tensor(g.input);
  if (!input) throw GraphError("graph input '" + g.input + "' is not declared");
  if (!input->shape.resolved())
    throw GraphError("graph input '" + g.input + "' shape is not fully specified");
  auto order = detail::topological_order(g);
  if (!order) throw GraphError("graph contains a cycle");
  g.schedule = *order;

  std::set<std::string> resolved{g.input};
  for (std::size_t idx : g.schedule) {
    Layer& l = g.layers[idx];
    for (const auto& in : l.inputs) {
      if (!g.find_tensor(in))
        throw GraphError("layer '" + l.name + "' consumes undefined tensor '" + in + "'");
      if (!resolved.contains(in))
        throw GraphError("layer '" + l.name + "' consumes tensor '" + in + "' that is never produced");
    }
    if (l.inputs.empty()) throw GraphError("layer '" + l.name + "' has no inputs");
    auto* out = g.find_tensor(l.output);
    if (!out) throw GraphError("layer '" + l.name + "' produces undefined tensor '" + l.output + "'");
    const Shape in = g.tensor(l.inputs[0]).shape;
    Shape result;
    switch (l.kind) {
      case OpKind::conv2d:
      case OpKind::depthwise_conv2d: {
        if (!detail::valid_kernel(l.kernel) || !detail::valid_stride(l.stride))
          throw GraphError("layer '" + l.name + "' has invalid kernel/stride");
        result.height = window_output_extent(in.height, l.kernel, l.stride, l.padding);
        result.width = window_output_extent(in.width, l.kernel, l.stride, l.padding);
        l.in_channels = in.channels;
        if (l.kind == OpKind::depthwise_conv2d) l.out_channels = in.channels;
        if (l.out_channels < 1) throw GraphError("layer '" + l.name + "' needs out_channels >= 1");
        result.channels = l.out_channels;
        if (!result.resolved())
          throw GraphError("layer '" + l.name + "' input " + to_string(in) + " is smaller than its kernel");
        break;
      }
      case OpKind::fully_connected:
        if (l.out_channels < 1) throw GraphError("layer '" + l.name + "' needs out_channels >= 1");
        l.in_channels = static_cast<int>(in.elements());
        result = {1, 1, l.out_channels};
        break;
      case OpKind::relu6:
        l.in_channels = l.out_channels = in.channels;
        result = in;
        break;
      case OpKind::global_avg_pool:
        l.in_channels = l.out_channels = in.channels;
        result = {1, 1, in.channels};
        break;
      case OpKind::residual_add: {
        if (l.inputs.size() != 2) throw GraphError("residual_add '" + l.name + "' needs two inputs");
        const Shape other = g.tensor(l.inputs[1]).shape;
        if (in != other)
          throw GraphError("residual_add '" + l.name + "' shape conflict between '" + l.inputs[0] +
                           "' (" + to_string(in) + ") and '" + l.inputs[1] + "' (" +
                           to_string(other) + ")");
        l.in_channels = l.out_channels = in.channels;
        result = in;
        break;
      }
      case OpKind::argmax_head:
        l.in_channels = static_cast<int>(in.elements());
        l.out_channels = 1;
        result = {1, 1, 1};
        break;
    }
    out->shape = result;
    resolved.insert(l.output);
  }
  return g;
}

// Throws a GraphError listing every violation if the graph is malformed.
inline void require_valid(const ModelGraph& g) {
  auto v = validate_graph(g);
  if (v.empty()) return;
  std::string msg = "invalid graph '" + g.name + "':";
  for (const auto& s : v) msg += "\n  " + s;
  throw GraphError(msg);
}

inline ModelGraph with_element_type(ModelGraph g, ElementType t) {
  for (auto& tensor : g.tensors) tensor.element = t;
  return g;
}

struct BlockSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int expansion = 6;
  int stride = 1;

  bool has_residual() const { return stride == 1 && in_channels == out_channels; }
};

// Inverted-residual block: 1x1 expand, relu6, kxk depthwise, relu6, 1x1
// project, plus a residual_add when stride is 1 and channels match. Layer
// and tensor names are "<prefix>.<role>"; the block output is the last
// layer's output.
inline std::vector<Layer> build_inverted_residual(const BlockSpec& b, std::string_view input,
                                                  std::string_view prefix) {
  if (b.kernel != 3 && b.kernel != 5 && b.kernel != 7)
    throw ParameterError("inverted residual kernel must be 3, 5 or 7, got " + std::to_string(b.kernel));
  if (b.expansion != 1 && b.expansion != 3 && b.expansion != 6)
    throw ParameterError("inverted residual expansion must be 1, 3 or 6, got " +
                         std::to_string(b.expansion));
  if (!detail::valid_stride(b.stride))
    throw ParameterError("inverted residual stride must be 1 or 2, got " + std::to_string(b.stride));
  if (b.in_channels < 1 || b.out_channels < 1)
    throw ParameterError("inverted residual channel counts must be positive");

  const std::string p(prefix);
  auto make = [&](std::string role, OpKind kind, std::vector<std::string> inputs) {
    Layer l;
    l.name = p + "." + role;
    l.output = l.name;
    l.kind = kind;
    l.inputs = std::move(inputs);
    l.expansion = b.expansion;
    return l;
  };

  std::vector<Layer> out;
  Layer expand = make("expand", OpKind::conv2d, {std::string(input)});
  expand.in_channels = b.in_channels;
  expand.out_channels = b.in_channels * b.expansion;
  out.push_back(expand);
  out.push_back(make("expand_relu", OpKind::relu6, {expand.output}));
  Layer dw = make("depthwise", OpKind::depthwise_conv2d, {out.back().output});
  dw.kernel = b.kernel;
  dw.stride = b.stride;
  dw.in_channels = dw.out_channels = expand.out_channels;
  out.push_back(dw);
  out.push_back(make("depthwise_relu", OpKind::relu6, {dw.output}));
  Layer project = make("project", OpKind::conv2d, {out.back().output});
  project.in_channels = expand.out_channels;
  project.out_channels = b.out_channels;
  out.push_back(project);
  if (b.has_residual()) out.push_back(make("add", OpKind::residual_add, {std::string(input), project.output}));
  return out;
}

// Incremental graph construction. Each layer's output tensor shares the
// layer's name; shapes are resolved by build().
class GraphBuilder {
 public:
  GraphBuilder(std::string graph_name, Shape input_shape, std::string input_name = "input")
      : last_(input_name) {
    graph_.name = std::move(graph_name);
    graph_.input = input_name;
    graph_.tensors.push_back({std::move(input_name), input_shape, ElementType::real32});
  }

  const std::string& last() const { return last_; }

  std::string conv2d(std::string name, std::string_view in, int out_channels, int kernel,
                     int stride = 1, Padding padding = Padding::same) {
    Layer l = base(std::move(name), OpKind::conv2d, {std::string(in)});
    l.out_channels = out_channels;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    return add(std::move(l));
  }

  std::string depthwise_conv2d(std::string name, std::string_view in, int kernel, int stride = 1,
                               Padding padding = Padding::same) {
    Layer l = base(std::move(name), OpKind::depthwise_conv2d, {std::string(in)});
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    return add(std::move(l));
  }

  std::string fully_connected(std::string name, std::string_view in, int out_channels) {
    Layer l = base(std::move(name), OpKind::fully_connected, {std::string(in)});
    l.out_channels = out_channels;
    return add(std::move(l));
  }

  std::string relu6(std::string name, std::string_view in) {
    return add(base(std::move(name), OpKind::relu6, {std::string(in)}));
  }

  std::string global_avg_pool(std::string name, std::string_view in) {
    return add(base(std::move(name), OpKind::global_avg_pool, {std::string(in)}));
  }

  std::string residual_add(std::string name, std::string_view a, std::string_view b) {
    return add(base(std::move(name), OpKind::residual_add, {std::string(a), std::string(b)}));
  }

  std::string argmax_head(std::string name, std::string_view in) {
    return add(base(std::move(name), OpKind::argmax_head, {std::string(in)}));
  }

  std::string inverted_residual(std::string_view prefix, std::string_view in, const BlockSpec& spec) {
    for (auto& l : build_inverted_residual(spec, in, prefix)) add(std::move(l));
    return last_;
  }

  // Resolves shapes and validates. The most recently produced tensor is the
  // graph output.
  ModelGraph build(int classes) && {
    graph_.output = last_;
    graph_.classes = classes;
    ModelGraph g = infer_shapes(std::move(graph_));
    require_valid(g);
    return g;
  }

 private:
  static Layer base(std::string name, OpKind kind, std::vector<std::string> inputs) {
    Layer l;
    l.output = name;
    l.name = std::move(name);
    l.kind = kind;
    l.inputs = std::move(inputs);
    return l;
  }

  std::string add(Layer l) {
    graph_.tensors.push_back({l.output, Shape{}, ElementType::real32});
    last_ = l.output;
    graph_.layers.push_back(std::move(l));
    return last_;
  }

  ModelGraph graph_;
  std::string last_;
};

// Wraps a single block in a graph with the given input shape.
inline ModelGraph block_graph(const BlockSpec& spec, Shape input_shape) {
  GraphBuilder b("block", input_shape);
  b.inverted_residual("b", "input", spec);
  return std::move(b).build(0);
}

}  // namespace tinybatt

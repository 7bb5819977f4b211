// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Regenerates the checked-in fixtures under <root>: seeded models, synthetic
// PPM datasets, the reference search space and the measured-footprint override files.
// With --freeze it also rewrites the regression pins in tests/data.
//
//   make_fixtures <root> [--freeze]

#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "tinybatt/tinybatt.hpp"
#include "tinybatt/fixtures.hpp"

namespace fs = std::filesystem;
using namespace tinybatt;

namespace {

constexpr std::uint64_t kDatasetFirst = 1000;
constexpr std::size_t kDatasetSize = 40;
constexpr std::size_t kCalibrationSize = 64;

std::string scene_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04llu.ppm", static_cast<unsigned long long>(index));
  return buf;
}

void write_scene(const fs::path& dir, std::uint64_t index) {
  write_file(dir / scene_name(index),
             encode_ppm(fixtures::synthetic_scene(fixtures::kSceneSeed, index, index % 2 == 1)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regenerate tinybatt fixtures"};
  std::string root = ".";
  bool freeze = false;
  app.add_option("root", root, "Repository root");
  app.add_flag("--freeze", freeze, "Also rewrite the regression pins in tests/data");
  CLI11_PARSE(app, argc, argv);
  const fs::path r = root;

  const auto model = fixtures::deepfish_tiny();
  save_float_model(r / "models/deepfish-tiny.json", model.graph, model.weights);
  const auto calib = fixtures::fixture_inputs(0, kCalibrationSize);
  const auto qm = quantize_model(model.graph, model.weights, collect_ranges(model.graph, model.weights, calib));
  save_quantized_model(r / "models/deepfish-tiny-int8.json", qm);

  for (std::uint64_t i = 0; i < kCalibrationSize; ++i) write_scene(r / "data/calib", i);
  for (std::uint64_t i = kDatasetFirst; i < kDatasetFirst + kDatasetSize; ++i)
    write_scene(r / "data/fixture" / (i % 2 ? "fish" : "background"), i);

  write_text(r / "data/search_space.json", to_json(fixtures::reference_search_space()).dump(2) + "\n");
  write_text(r / "data/measured_original.json",
             json{{"flash_kb", 1350.25}, {"ram_kb", 80.20}, {"time_ms", 248.0}, {"power_mw", 13.32},
                  {"energy_mj", 3.29}}
                     .dump(2) +
                 "\n");
  write_text(r / "data/measured_optimized.json",
             json{{"flash_kb", 483.82}, {"ram_kb", 70.32}, {"time_ms", 118.0}, {"power_mw", 4.83},
                  {"energy_mj", 0.57}}
                     .dump(2) +
                 "\n");

  if (freeze) {
    const auto bundle = emit_c(qm);
    write_file(r / "tests/data/deepfish-tiny-golden.bin", bundle.golden);
    const auto ds = load_dataset(r / "data/fixture");
    std::vector<int> float_pred, int_pred;
    for (const auto& x : ds.inputs) {
      float_pred.push_back(static_cast<int>(predict_float(model.graph, model.weights, x)));
      int_pred.push_back(static_cast<int>(run_int(qm, quantize_input(qm, x)).predicted));
    }
    const auto space = fixtures::reference_search_space();
    const auto sampled = sample_one_path(space, uniform_gates(space), 42);
    const auto x0 = fixtures::fixture_input(0);
    const auto float_logits0 = run_float(model.graph, model.weights, x0);
    const auto int0 = run_int(qm, quantize_input(qm, x0));
    json pins = {
        {"input0_float_logits", float_logits0},
        {"input0_float_class", predict_float(model.graph, model.weights, x0)},
        {"input0_int8_logits", int0.logits.data},
        {"input0_int8_class", int0.predicted},
        {"digest", detail::hex64(bundle.digest)},
        {"arena_bytes", bundle.arena_size},
        {"evaluate_float", repeated_accuracy(float_pred, ds.labels, 10, 1).formatted()},
        {"evaluate_int8", repeated_accuracy(int_pred, ds.labels, 10, 1).formatted()},
        {"sample_one_path_seed42", sampled.label(space)},
        {"source_fnv1a64", detail::hex64(fnv1a64(std::string_view(bundle.source)))},
    };
    write_text(r / "tests/data/regression.json", pins.dump(2) + "\n");
  }
  std::printf("fixtures written under %s\n", r.string().c_str());
  return 0;
}

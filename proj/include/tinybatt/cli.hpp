// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// The `tinybatt` command-line driver. Commands are plain functions over a
// resolved PipelineConfig so tests can call them in-process; run_cli does
// argument parsing and maps exceptions to exit codes.

#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "tinybatt/codegen_c.hpp"
#include "tinybatt/config.hpp"
#include "tinybatt/estimator.hpp"
#include "tinybatt/evaluate.hpp"
#include "tinybatt/fixtures.hpp"
#include "tinybatt/model_io.hpp"

namespace tinybatt::cli {

enum ExitCode : int { kOk = 0, kDomainError = 1, kUsageError = 2, kEnvironmentSkip = 3 };

struct Context {
  PipelineConfig config;
  bool json = false;
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

namespace fs = std::filesystem;

inline std::vector<fs::path> files_with_extensions(const fs::path& dir, std::set<std::string> exts) {
  if (!fs::is_directory(dir)) throw UsageError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && exts.contains(e.path().extension().string())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<float> load_input(const fs::path& p, ChannelMode mode) {
  const auto ext = p.extension().string();
  if (ext == ".ppm") return preprocess_ppm(read_file(p), mode).tensor;
  if (ext == ".f32") return read_tensor_file(p);
  throw UsageError("input '" + p.string() + "' must be a .ppm image or a .f32 tensor");
}

inline std::vector<std::vector<float>> load_inputs_from_dir(const fs::path& dir, ChannelMode mode) {
  const auto files = files_with_extensions(dir, {".ppm", ".f32"});
  if (files.empty()) throw UsageError("'" + dir.string() + "' contains no .ppm or .f32 inputs");
  std::vector<std::vector<float>> inputs;
  for (const auto& f : files) inputs.push_back(load_input(f, mode));
  return inputs;
}

inline LoadedModel load_configured_model(const PipelineConfig& c) {
  if (c.model.empty()) throw UsageError("no model given (use --model or the config 'model' field)");
  LoadedModel m = load_model(c.model);
  if (!c.weights_blob.empty()) {
    const auto manifest = json::parse(read_text(c.model));
    const fs::path expected = fs::path(c.model).parent_path() / manifest.at("weights_blob").get<std::string>();
    if (!fs::equivalent(expected, c.weights_blob))
      throw UsageError("configured weights_blob '" + c.weights_blob + "' is not the blob named by the manifest");
  }
  return m;
}

struct Prediction {
  std::size_t predicted = 0;
  std::vector<double> logits;  // dequantized for int8 models
  std::vector<int> raw;        // int8 logits, int8 models only
};

inline Prediction predict(const LoadedModel& m, std::span<const float> input) {
  Prediction p;
  if (m.is_quantized()) {
    const auto& qm = *m.quantized;
    const auto r = run_int(qm, quantize_input(qm, input));
    p.predicted = r.predicted;
    for (auto v : r.logits.data) {
      p.raw.push_back(v);
      p.logits.push_back(dequantize_value(v, r.logits.qparams));
    }
  } else {
    const auto logits = run_float(m.graph, *m.weights, input);
    p.predicted = argmax(std::span<const float>(logits));
    p.logits.assign(logits.begin(), logits.end());
  }
  return p;
}

inline FootprintReport footprint(const LoadedModel& m, const PipelineConfig& c) {
  if (m.is_quantized()) return estimate(*m.quantized, c.profile);
  return estimate(m.graph, ElementType::real32, c.real32_profile);
}

inline std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char ch : s) q += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  return q + "'";
}

// Runs a shell command, returning its exit status and combined output.
inline std::pair<int, std::string> run_command(const std::string& cmd) {
  std::string output;
  FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) throw IoError("cannot start '" + cmd + "'");
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) output += buf;
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status)) return {-1, output};
  return {WEXITSTATUS(status), output};
}

inline bool have_program(const std::string& name) {
  return std::system(("command -v " + shell_quote(name) + " >/dev/null 2>&1").c_str()) == 0;
}

}  // namespace detail

// Every .ppm under in_dir becomes <out_dir>/<relative stem>.f32; --dump adds
// the 32x32 plane as <stem>.plane. Undecodable files are listed, not fatal.
inline int cmd_preprocess(Context& ctx, const std::string& in_dir, const std::string& out_dir, bool dump) {
  namespace fs = std::filesystem;
  const auto files = detail::files_with_extensions(in_dir, {".ppm"});
  if (files.empty()) throw UsageError("input directory '" + in_dir + "' contains no .ppm files");
  std::size_t ok = 0;
  std::vector<std::pair<std::string, std::string>> failed;
  for (const auto& f : files) {
    try {
      const auto p = preprocess_ppm(read_file(f), ctx.config.channel);
      const fs::path stem = fs::path(out_dir) / fs::relative(f, in_dir).replace_extension();
      write_tensor_file(fs::path(stem).concat(".f32"), p.tensor);
      if (dump) write_file(fs::path(stem).concat(".plane"), p.plane.data);
      ++ok;
    } catch (const DecodeError& e) {
      failed.emplace_back(f.string(), e.what());
    } catch (const IoError& e) {
      failed.emplace_back(f.string(), e.what());
    }
  }
  if (ctx.json) {
    json j = {{"ok", ok}, {"failed", json::array()}};
    for (const auto& [file, why] : failed) j["failed"].push_back({{"file", file}, {"error", why}});
    ctx.out << j.dump(2) << "\n";
  } else {
    ctx.out << ok << " ok, " << failed.size() << " failed\n";
    for (const auto& [file, why] : failed) ctx.out << "failed: " << file << ": " << why << "\n";
  }
  return kOk;
}

inline int cmd_calibrate(Context& ctx, const std::string& out_path) {
  const auto& c = ctx.config;
  const LoadedModel m = detail::load_configured_model(c);
  if (m.is_quantized()) throw UsageError("calibrate needs a real32 model");
  if (c.calibration_dir.empty()) throw UsageError("no calibration directory given (use --calib)");
  const auto inputs = detail::load_inputs_from_dir(c.calibration_dir, c.channel);
  const unsigned workers = c.workers ? c.workers : std::max(1u, std::thread::hardware_concurrency());
  const auto ranges = collect_ranges(m.graph, *m.weights, inputs, workers);
  write_text(out_path, ranges_to_json(ranges).dump(2) + "\n");
  if (ctx.json)
    ctx.out << json{{"ranges", out_path}, {"tensors", ranges.size()}, {"inputs", inputs.size()}}.dump(2) << "\n";
  else
    ctx.out << "calibrated " << ranges.size() << " tensors over " << inputs.size() << " inputs -> " << out_path << "\n";
  return kOk;
}

inline int cmd_quantize(Context& ctx, const std::string& ranges_path, const std::string& out_manifest) {
  const auto& c = ctx.config;
  c.quantization.validate();
  const LoadedModel m = detail::load_configured_model(c);
  if (m.is_quantized()) throw UsageError("model is already quantized");
  CalibrationRanges ranges;
  if (!ranges_path.empty()) {
    ranges = ranges_from_json(json::parse(read_text(ranges_path)));
  } else {
    if (c.calibration_dir.empty()) throw UsageError("quantize needs --ranges or a calibration directory");
    const auto inputs = detail::load_inputs_from_dir(c.calibration_dir, c.channel);
    ranges = collect_ranges(m.graph, *m.weights, inputs,
                            c.workers ? c.workers : std::max(1u, std::thread::hardware_concurrency()));
  }
  const QuantizedModel qm = quantize_model(m.graph, *m.weights, ranges);
  save_quantized_model(out_manifest, qm);
  if (ctx.json)
    ctx.out << json{{"manifest", out_manifest}, {"weight_bytes", qm.weight_bytes()}, {"bias_bytes", qm.bias_bytes()}}
                   .dump(2)
            << "\n";
  else
    ctx.out << "quantized " << qm.graph.name << ": " << qm.weight_bytes() << " weight bytes, " << qm.bias_bytes()
            << " bias bytes -> " << out_manifest << "\n";
  return kOk;
}

inline int cmd_run(Context& ctx, const std::vector<std::string>& inputs) {
  const LoadedModel m = detail::load_configured_model(ctx.config);
  if (inputs.empty()) throw UsageError("run needs at least one input file");
  json all = json::array();
  for (const auto& f : inputs) {
    const auto p = detail::predict(m, detail::load_input(f, ctx.config.channel));
    if (ctx.json) {
      json j = {{"input", f}, {"predicted", p.predicted}, {"logits", p.logits}};
      if (m.is_quantized()) j["logits_int8"] = p.raw;
      all.push_back(j);
    } else {
      ctx.out << f << ": class " << p.predicted << " logits";
      for (double v : p.logits) ctx.out << " " << detail::fixed(v, 4);
      ctx.out << "\n";
    }
  }
  if (ctx.json) ctx.out << all.dump(2) << "\n";
  return kOk;
}

inline int cmd_evaluate(Context& ctx, const std::string& data_dir) {
  const auto& c = ctx.config;
  const LoadedModel m = detail::load_configured_model(c);
  const LabeledDataset ds = load_dataset(data_dir, c.channel);
  if (static_cast<int>(ds.classes.size()) != m.graph.classes)
    throw UsageError("dataset has " + std::to_string(ds.classes.size()) + " class directories but the model has " +
                     std::to_string(m.graph.classes) + " classes");
  std::vector<int> predictions;
  for (const auto& x : ds.inputs) predictions.push_back(static_cast<int>(detail::predict(m, x).predicted));
  const auto acc = repeated_accuracy(predictions, ds.labels, c.repeats, c.seeds.seed, c.split_fraction);
  if (ctx.json)
    ctx.out << json{{"variant", m.is_quantized() ? "int8" : "real32"},
                    {"samples", ds.inputs.size()},
                    {"repeats", c.repeats},
                    {"seed", c.seeds.seed},
                    {"per_repeat", acc.per_repeat},
                    {"mean", acc.mean},
                    {"stddev", acc.stddev},
                    {"formatted", acc.formatted()}}
                   .dump(2)
            << "\n";
  else
    ctx.out << acc.formatted() << "\n";
  return kOk;
}

// JSON schema: {"original": F, "optimized": F, "reductions": R} where F has
// flash_kb, ram_kb, macs, time_ms, power_mw, energy_mj and R has flash, ram,
// time, power, energy (percent).
inline int cmd_report(Context& ctx, const std::string& original, const std::string& optimized,
                      const std::string& original_override, const std::string& optimized_override,
                      const std::string& out_path) {
  auto c = ctx.config;
  auto load_report = [&](const std::string& manifest, const std::string& override_path) {
    c.model = manifest;
    FootprintReport r = detail::footprint(detail::load_configured_model(c), ctx.config);
    if (!override_path.empty()) r = apply_overrides(r, json::parse(read_text(override_path)));
    return r;
  };
  const FootprintReport a = load_report(original, original_override);
  const FootprintReport b = load_report(optimized, optimized_override);
  const Reductions red = reduction_report(a, b);
  const json j = {{"original", to_json(a)}, {"optimized", to_json(b)}, {"reductions", to_json(red)}};
  write_text(out_path, j.dump(2) + "\n");
  if (ctx.json) {
    ctx.out << j.dump(2) << "\n";
    return kOk;
  }
  auto row = [&](const char* name, double x, double y, std::optional<double> r, int digits = 2) {
    ctx.out << std::left << std::setw(12) << name << std::right << std::setw(14) << detail::fixed(x, digits)
            << std::setw(14) << detail::fixed(y, digits) << std::setw(12)
            << (r ? detail::fixed(*r) + "%" : std::string("-")) << "\n";
  };
  ctx.out << std::left << std::setw(12) << "metric" << std::right << std::setw(14) << "original" << std::setw(14)
          << "optimized" << std::setw(12) << "reduction" << "\n";
  row("Flash (KB)", a.flash_kb, b.flash_kb, red.flash);
  row("RAM (KB)", a.ram_kb, b.ram_kb, red.ram);
  row("MACs", static_cast<double>(a.macs), static_cast<double>(b.macs), std::nullopt, 0);
  row("Time (ms)", a.time_ms, b.time_ms, red.time);
  row("Power (mW)", a.power_mw, b.power_mw, red.power);
  row("Energy (mJ)", a.energy_mj, b.energy_mj, red.energy);
  ctx.out << "report written to " << out_path << "\n";
  return kOk;
}

inline int cmd_search(Context& ctx, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const auto& c = ctx.config;
  if (c.search.space.empty()) throw UsageError("no search space given (use --space)");
  const SearchSpace space = search_space_from_json(json::parse(read_text(c.search.space)));
  std::vector<ArchCandidate> pool;
  if (c.search.samples == 0) {
    pool = evaluate_space(space, c.profile, c.workers);
  } else {
    GateVector gates = uniform_gates(space);
    if (!c.search.gates.empty()) gates = json::parse(read_text(c.search.gates)).get<GateVector>();
    std::set<ArchPath> seen;
    for (std::size_t i = 0; i < c.search.samples; ++i) {
      const ArchPath path = sample_path(space, gates, fixtures::mix_seed(c.seeds.seed, i));
      if (seen.insert(path).second) pool.push_back(evaluate_path(space, path, c.profile));
    }
  }
  const ArchCandidate best =
      select_best(std::span<const ArchCandidate>(pool), space, c.search.flash_budget_kb, c.search.ram_budget_kb);

  std::vector<const ArchCandidate*> ranked;
  for (const auto& cand : pool)
    if (within_budget(cand.cost, c.search.flash_budget_kb, c.search.ram_budget_kb)) ranked.push_back(&cand);
  std::sort(ranked.begin(), ranked.end(), [](const auto* x, const auto* y) { return better_candidate(*x, *y); });
  std::ostringstream csv;
  csv << "path,flash_kb,ram_kb,macs,time_ms\n";
  for (const auto* cand : ranked)
    csv << cand->label(space) << "," << detail::fixed(cand->cost.flash_kb, 4) << ","
        << detail::fixed(cand->cost.ram_kb, 4) << "," << cand->cost.macs << "," << detail::fixed(cand->cost.time_ms, 6)
        << "\n";
  write_text(fs::path(out_dir) / "ranked.csv", csv.str());
  ModelGraph winner = best.graph;
  winner.name = "arch-" + best.label(space);
  save_float_model(fs::path(out_dir) / "winner.json", winner, fixtures::init_weights(winner, c.seeds.weight_seed));

  if (ctx.json)
    ctx.out << json{{"winner", best.label(space)},
                    {"cost", to_json(best.cost)},
                    {"evaluated", pool.size()},
                    {"feasible", ranked.size()},
                    {"manifest", (fs::path(out_dir) / "winner.json").string()}}
                   .dump(2)
            << "\n";
  else
    ctx.out << "winner " << best.label(space) << ": flash " << detail::fixed(best.cost.flash_kb) << " KB, ram "
            << detail::fixed(best.cost.ram_kb) << " KB, " << best.cost.macs << " MACs, "
            << detail::fixed(best.cost.time_ms, 4) << " ms (" << ranked.size() << " of " << pool.size()
            << " candidates fit)\n";
  return kOk;
}

inline int cmd_emit(Context& ctx, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const auto& c = ctx.config;
  const LoadedModel m = detail::load_configured_model(c);
  if (!m.is_quantized()) throw UsageError("emit needs a quantized model (run quantize first)");
  const EmittedBundle b = emit_c(*m.quantized, {c.arena_cap, c.golden_count, c.seeds.golden_seed});
  write_text(fs::path(out_dir) / "model.h", b.header);
  write_text(fs::path(out_dir) / "model.c", b.source);
  write_file(fs::path(out_dir) / "golden.bin", b.golden);
  if (ctx.json)
    ctx.out << json{{"dir", out_dir}, {"digest", tinybatt::detail::hex64(b.digest)}, {"arena_bytes", b.arena_size}}
                   .dump(2)
            << "\n";
  else
    ctx.out << "emitted model.h, model.c, golden.bin to " << out_dir << " (arena " << b.arena_size << " B, digest "
            << tinybatt::detail::hex64(b.digest) << ")\n";
  return kOk;
}

// Compiles <dir>/model.c with the runtime shim and replays <dir>/golden.bin.
// The shim is found at `shim`, $TINYBATT_SHIM or <dir>/shim.c, and is run as
// `<exe> <golden.bin>`: exit 0 on a full match, 1 on a mismatch, 2 on a
// malformed golden file.
inline int cmd_verify(Context& ctx, const std::string& dir, std::string shim, std::string cc) {
  namespace fs = std::filesystem;
  for (const char* f : {"model.c", "model.h", "golden.bin"})
    if (!fs::exists(fs::path(dir) / f)) throw UsageError("'" + dir + "' has no " + f + " (run emit first)");
  if (cc.empty()) cc = std::getenv("CC") ? std::getenv("CC") : "cc";
  if (shim.empty() && std::getenv("TINYBATT_SHIM")) shim = std::getenv("TINYBATT_SHIM");
  if (shim.empty()) shim = (fs::path(dir) / "shim.c").string();
  if (!detail::have_program(cc)) {
    ctx.err << "verify skipped: requires a C99 compiler ('" << cc << "' not found; set CC or --cc)\n";
    return kEnvironmentSkip;
  }
  if (!fs::exists(shim)) {
    ctx.err << "verify skipped: requires the runtime shim source ('" << shim
            << "' not found; set TINYBATT_SHIM or --shim)\n";
    return kEnvironmentSkip;
  }
  const fs::path work = fs::temp_directory_path() / ("tinybatt-verify-" + std::to_string(::getpid()));
  fs::create_directories(work);
  const fs::path exe = work / "replay";
  const std::string compile = detail::shell_quote(cc) + " -std=c99 -pedantic-errors -Wall -Werror -O1 -I" +
                              detail::shell_quote(dir) + " " + detail::shell_quote((fs::path(dir) / "model.c").string()) +
                              " " + detail::shell_quote(shim) + " -o " + detail::shell_quote(exe.string());
  const auto [cstatus, clog] = detail::run_command(compile);
  if (cstatus != 0) {
    fs::remove_all(work);
    ctx.err << "compilation failed:\n" << clog;
    return kDomainError;
  }
  const auto [status, log] =
      detail::run_command(detail::shell_quote(exe.string()) + " " +
                          detail::shell_quote((fs::path(dir) / "golden.bin").string()));
  fs::remove_all(work);
  ctx.out << log;
  if (status == 0) {
    if (!ctx.json) ctx.out << "verify: all golden records match\n";
    return kOk;
  }
  ctx.err << "verify failed (replay exit status " << status << ")\n";
  return kDomainError;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"tinybatt: quantize, cost and deploy small image classifiers as integer-only C"};
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool json_out = false, print_config = false;
  app.add_option("--config", config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for evaluation splits and gate sampling");
  app.add_flag("--json", json_out, "Machine-readable output");
  app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");

  // Overrides applied on top of the config file; empty means "not given".
  std::string model, calib, channel, out_path, ranges, data, original, optimized, orig_override, opt_override, space,
      gates, shim, cc;
  std::optional<int> repeats;
  std::optional<double> flash_budget, ram_budget;
  std::optional<std::size_t> samples, golden_count;
  std::string in_dir, out_dir = "";
  bool dump = false;
  std::vector<std::string> inputs;
  std::string emitted_dir;

  auto* pre = app.add_subcommand("preprocess", "Convert a directory of PPM images into 32x32x1 tensors");
  pre->add_option("in_dir", in_dir, "Directory of .ppm files (searched recursively)")->required();
  pre->add_option("out_dir", out_dir, "Output directory for .f32 tensors")->required();
  pre->add_flag("--dump", dump, "Also write the 1024-byte plane of each image");
  pre->add_option("--channel", channel, "Channel reduction: luma, red, green or blue");

  auto* cal = app.add_subcommand("calibrate", "Record activation ranges of a real32 model");
  cal->add_option("--model", model, "Model manifest");
  cal->add_option("--calib", calib, "Calibration directory of .ppm or .f32 inputs");
  cal->add_option("--channel", channel, "Channel reduction for .ppm inputs");
  cal->add_option("-o,--out", out_path, "Ranges JSON to write")->required();

  auto* quant = app.add_subcommand("quantize", "Quantize a real32 model to int8");
  quant->add_option("--model", model, "Real32 model manifest");
  quant->add_option("--ranges", ranges, "Ranges JSON from calibrate")->check(CLI::ExistingFile);
  quant->add_option("--calib", calib, "Calibration directory (when --ranges is not given)");
  quant->add_option("--channel", channel, "Channel reduction for .ppm inputs");
  quant->add_option("-o,--out", out_path, "Quantized manifest to write")->required();

  auto* run = app.add_subcommand("run", "Classify inputs with a real32 or int8 model");
  run->add_option("--model", model, "Model manifest");
  run->add_option("--channel", channel, "Channel reduction for .ppm inputs");
  run->add_option("inputs", inputs, ".ppm or .f32 inputs")->required();

  auto* eval = app.add_subcommand(
      "evaluate",
      "Accuracy as mean±std over repeated evaluations. Each repeat scores a seeded, class-stratified random half of "
      "the dataset (one directory per class); repeats differ only in the split, not in the model");
  eval->add_option("--model", model, "Model manifest");
  eval->add_option("--data", data, "Dataset root with one sub-directory of .ppm files per class")->required();
  eval->add_option("--repeats", repeats, "Number of seeded re-splits");
  eval->add_option("--channel", channel, "Channel reduction");

  auto* rep = app.add_subcommand("report", "Flash/RAM/time/power/energy of two models and the reductions");
  rep->add_option("--original", original, "Original model manifest")->required();
  rep->add_option("--optimized", optimized, "Optimized model manifest")->required();
  rep->add_option("--original-override", orig_override, "JSON with measured values replacing the estimates")
      ->check(CLI::ExistingFile);
  rep->add_option("--optimized-override", opt_override, "JSON with measured values replacing the estimates")
      ->check(CLI::ExistingFile);
  rep->add_option("-o,--out", out_path, "Report JSON to write (default <output_dir>/report.json)");

  auto* search = app.add_subcommand("search", "Pick the fastest architecture that fits the flash and RAM budgets");
  search->add_option("--space", space, "Search-space JSON");
  search->add_option("--flash-budget", flash_budget, "Flash budget in KB");
  search->add_option("--ram-budget", ram_budget, "RAM budget in KB");
  search->add_option("--samples", samples, "Sample this many gate-drawn paths instead of enumerating");
  search->add_option("--gates", gates, "Gate probabilities JSON (list of per-position lists)");
  search->add_option("-o,--out", out_dir, "Output directory (default <output_dir>)");

  auto* emit = app.add_subcommand("emit", "Generate model.h, model.c and golden.bin from an int8 model");
  emit->add_option("--model", model, "Quantized model manifest");
  emit->add_option("--golden-count", golden_count, "Number of golden vectors");
  emit->add_option("-o,--out", out_dir, "Output directory (default <output_dir>)");

  auto* verify = app.add_subcommand("verify", "Compile the emitted C with the runtime shim and replay golden.bin");
  verify->add_option("dir", emitted_dir, "Directory written by emit")->required();
  verify->add_option("--shim", shim, "Runtime shim C source");
  verify->add_option("--cc", cc, "C compiler (default $CC or cc)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  Context ctx{PipelineConfig{}, json_out, out, err};
  try {
    if (!config_path.empty()) {
      json j;
      try {
        j = json::parse(read_text(config_path));
      } catch (const json::exception& e) {
        throw UsageError("cannot parse config '" + config_path + "': " + e.what());
      }
      ctx.config = config_from_json(j);
    }
    auto& c = ctx.config;
    if (seed) c.seeds.seed = *seed;
    if (!model.empty()) c.model = model;
    if (!calib.empty()) c.calibration_dir = calib;
    if (!channel.empty()) {
      try {
        c.channel = parse_channel_mode(channel);
      } catch (const ParameterError& e) {
        throw UsageError(e.what());
      }
    }
    if (repeats) c.repeats = *repeats;
    if (!space.empty()) c.search.space = space;
    if (!gates.empty()) c.search.gates = gates;
    if (flash_budget) c.search.flash_budget_kb = *flash_budget;
    if (ram_budget) c.search.ram_budget_kb = *ram_budget;
    if (samples) c.search.samples = *samples;
    if (golden_count) c.golden_count = *golden_count;
    if (!out_dir.empty() && (*search || *emit)) c.output_dir = out_dir;

    if (print_config) {
      out << to_json(c).dump(2) << "\n";
      return kOk;
    }
    if (app.get_subcommands().empty()) throw UsageError("no command given (see --help)");
    c.validate();

    if (*pre) return cmd_preprocess(ctx, in_dir, out_dir, dump);
    if (*cal) return cmd_calibrate(ctx, out_path);
    if (*quant) return cmd_quantize(ctx, ranges, out_path);
    if (*run) return cmd_run(ctx, inputs);
    if (*eval) return cmd_evaluate(ctx, data);
    if (*rep)
      return cmd_report(ctx, original, optimized, orig_override, opt_override,
                        out_path.empty() ? (std::filesystem::path(c.output_dir) / "report.json").string() : out_path);
    if (*search) return cmd_search(ctx, c.output_dir);
    if (*emit) return cmd_emit(ctx, c.output_dir);
    if (*verify) return cmd_verify(ctx, emitted_dir, shim, cc);
    throw UsageError("no command given (see --help)");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDomainError;
  } catch (const json::exception& e) {
    err << "error: malformed JSON input: " << e.what() << "\n";
    return kDomainError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDomainError;
  }
}

}  // namespace tinybatt::cli

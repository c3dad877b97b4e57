#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pfsel/codec.hpp"
#include "pfsel/dtree.hpp"
#include "pfsel/labeling.hpp"
#include "pfsel/phase.hpp"
#include "pfsel/toml_lite.hpp"
#include "pfsel/trace_io.hpp"

namespace pfsel {

struct PipelineManifest {
  std::map<PrefetcherConfig, std::vector<std::string>> traces;  // per-config trace files
  PrefetcherConfig baseline = PrefetcherConfig::off();
  int k = 16;
  std::uint64_t seed = 0;
  int depth = 4;
  FeatureSelectMethod method = FeatureSelectMethod::kImportance;
  std::uint64_t min_samples = 1;
  std::string model_out = "model.pfm";
};

inline PipelineManifest read_manifest(const std::string& path) {
  const TomlTable t = read_toml_file(path);
  PipelineManifest m;
  if (const auto* v = t.find("baseline")) {
    auto cfg = PrefetcherConfig::parse(v->as_string(path + ": baseline"));
    if (!cfg || !cfg->is_valid()) throw ParseError(path + ": baseline mask not in valid set");
    m.baseline = *cfg;
  }
  if (const auto* v = t.find("k")) m.k = static_cast<int>(v->as_int(path + ": k"));
  if (const auto* v = t.find("seed")) m.seed = static_cast<std::uint64_t>(v->as_int(path + ": seed"));
  if (const auto* v = t.find("depth")) m.depth = static_cast<int>(v->as_int(path + ": depth"));
  if (const auto* v = t.find("method")) m.method = parse_select_method(v->as_string(path + ": method"));
  if (const auto* v = t.find("min_samples"))
    m.min_samples = static_cast<std::uint64_t>(v->as_int(path + ": min_samples"));
  if (const auto* v = t.find("model_out")) m.model_out = v->as_string(path + ": model_out");
  const TomlTable* traces = t.find_table("traces");
  if (!traces || traces->values.empty()) throw ParseError(path + ": missing [traces] table");
  for (const auto& [key, val] : traces->values) {
    auto cfg = PrefetcherConfig::parse(key);
    if (!cfg || !cfg->is_valid())
      throw ParseError(path + ": trace key '" + key + "' is not a valid config mask");
    m.traces[*cfg] = val.as_string_array(path + ": traces." + key);
  }
  if (!m.traces.count(m.baseline))
    throw ParseError(path + ": no traces listed for baseline " + m.baseline.to_string());
  return m;
}

// Everything the offline stages produce, kept for inspection and tests.
struct PipelineResult {
  PhaseModel phases;
  PhaseConfigTable table;
  TrainingSet training;
  std::array<std::uint8_t, 4> feature_map{};
  DecisionTree tree;
  double training_accuracy = 0;
};

struct PipelineInputs {
  std::vector<Trace> traces;
  PrefetcherConfig baseline = PrefetcherConfig::off();
  int k = 16;
  std::uint64_t seed = 0;
  int depth = 4;
  FeatureSelectMethod method = FeatureSelectMethod::kImportance;
  std::uint64_t min_samples = 1;
};

// Stages 2-5 chained: scaler+k-means on baseline, phase table, training set,
// feature selection, tree training.
inline PipelineResult run_pipeline(const PipelineInputs& in) {
  std::vector<FeatureVector> baseline_features;
  for (const auto& trace : in.traces) {
    if (!trace.meta.config)
      throw DataError("pipeline: trace '" + trace.meta.workload_name + "' has no recorded config");
    if (*trace.meta.config == in.baseline)
      for (const auto& s : trace.samples) baseline_features.push_back(compute_features(s));
  }
  if (baseline_features.empty())
    throw DataError("pipeline: no samples recorded under baseline " + in.baseline.to_string());

  PipelineResult out;
  out.phases = fit_phase_model(baseline_features, in.k, in.seed);
  out.table = build_phase_table(in.traces, out.phases);
  out.training = build_training_set(in.traces, out.phases, out.table, in.min_samples);
  out.feature_map = select_features(out.training, out.phases.scaler, in.method);
  out.tree = train_tree(out.training, out.phases.scaler, out.feature_map, in.depth);
  out.training_accuracy = training_accuracy(out.tree, out.training, out.phases.scaler);
  return out;
}

// Manifest front end: loads the trace files, stamps/validates their configs,
// runs the stages, and writes the model container (phase section included).
inline PipelineResult run_pipeline(const PipelineManifest& m) {
  PipelineInputs in;
  in.baseline = m.baseline;
  in.k = m.k;
  in.seed = m.seed;
  in.depth = m.depth;
  in.method = m.method;
  in.min_samples = m.min_samples;
  for (const auto& [cfg, paths] : m.traces) {
    for (const auto& path : paths) {
      Trace t = read_trace(path);
      if (t.meta.config && *t.meta.config != cfg)
        throw DataError(path + ": recorded config " + t.meta.config->to_string() +
                        " does not match manifest key " + cfg.to_string());
      t.meta.config = cfg;
      in.traces.push_back(std::move(t));
    }
  }
  PipelineResult out = run_pipeline(in);
  write_model_file(m.model_out, out.tree, out.phases.scaler, &out.phases);
  return out;
}

}  // namespace pfsel

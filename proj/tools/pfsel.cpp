// pfsel - offline trainer, evaluator, and runtime agent for phase-based
// prefetcher selection.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pfsel/pfsel.hpp"

namespace fs = std::filesystem;
using namespace pfsel;

namespace {

std::atomic<bool> g_stop{false};

void handle_sigint(int) { g_stop.store(true); }

PrefetcherConfig parse_mask_arg(const std::string& s, const std::string& what) {
  auto cfg = PrefetcherConfig::parse(s);
  if (!cfg || !cfg->is_valid())
    throw DataError(what + ": '" + s + "' is not in the platform's valid config set");
  return *cfg;
}

std::vector<Trace> load_traces(const std::vector<std::string>& paths, bool require_config) {
  std::vector<Trace> traces;
  for (const auto& p : paths) {
    Trace t = read_trace(p);
    if (require_config && !t.meta.config)
      throw DataError(p + ": trace has no '# config=' line; required for labeling");
    traces.push_back(std::move(t));
  }
  return traces;
}

void print_phase_label_table(const PipelineResult& res) {
  std::printf("phase  samples  best   mean_ipc\n");
  for (int p = 0; p < res.phases.k(); ++p) {
    std::uint64_t total = 0;
    for (auto cfg : PrefetcherConfig::valid_set()) total += res.table.cell(p, cfg).sample_count;
    if (total == 0) {
      std::printf("%5d  %7llu  -      -\n", p, static_cast<unsigned long long>(total));
      continue;
    }
    const PrefetcherConfig best = best_config(res.table, p);
    std::printf("%5d  %7llu  %s   %.4f\n", p, static_cast<unsigned long long>(total),
                best.to_string().c_str(), res.table.cell(p, best).mean_ipc);
  }
}

// ---- subcommand bodies -----------------------------------------------------

struct GenOpts {
  std::string out_dir;
  int workloads = 4;
  std::uint64_t seed = 1;
  double noise = 0.0;
  int archetypes = 6;
  int k = 16;
  int depth = 4;
  bool manifest = true;
};

int cmd_gen(const GenOpts& o) {
  fs::create_directories(o.out_dir);
  fs::create_directories(fs::path(o.out_dir) / "traces");
  const auto lib = make_archetype_library(o.seed, o.archetypes);
  GenOptions gen;
  gen.noise_sigma = o.noise;
  std::vector<std::string> names;
  for (int i = 0; i < o.workloads; ++i) {
    const std::string name = "w" + std::to_string(i);
    const WorkloadSpec spec = make_workload(lib, o.seed * 1000 + i + 1, gen, name);
    write_workload_spec(spec, (fs::path(o.out_dir) / (name + ".toml")).string());
    names.push_back(name);
  }
  if (o.manifest) {
    const std::string path = (fs::path(o.out_dir) / "manifest.toml").string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out << "baseline = \"0000\"\n";
    out << "k = " << o.k << "\n";
    out << "seed = " << o.seed << "\n";
    out << "depth = " << o.depth << "\n";
    out << "method = \"importance\"\n";
    out << "model_out = \"" << (fs::path(o.out_dir) / "model.pfm").string() << "\"\n\n";
    out << "[traces]\n";
    for (auto cfg : PrefetcherConfig::valid_set()) {
      out << cfg.to_string() << " = [";
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out << ", ";
        out << '"' << (fs::path(o.out_dir) / "traces" / (names[i] + "_" + cfg.to_string() + ".csv")).string()
            << '"';
      }
      out << "]\n";
    }
  }
  std::printf("wrote %d workload specs under %s\n", o.workloads, o.out_dir.c_str());
  if (o.manifest)
    std::printf("next: pfsel sweep --all --out-dir %s/traces %s/w*.toml ; pfsel pipeline --manifest %s/manifest.toml\n",
                o.out_dir.c_str(), o.out_dir.c_str(), o.out_dir.c_str());
  return 0;
}

struct SweepOpts {
  std::vector<std::string> specs;
  std::string config;
  std::string out;
  std::string out_dir;
  bool all = false;
};

int cmd_sweep(const SweepOpts& o) {
  if (o.all && !o.config.empty()) throw DataError("sweep: --all and --config are exclusive");
  if (!o.all && o.config.empty()) throw DataError("sweep: pass --config MASK or --all");
  for (const auto& spec_path : o.specs) {
    const WorkloadSpec spec = read_workload_spec(spec_path);
    if (o.all) {
      if (o.out_dir.empty()) throw DataError("sweep: --all requires --out-dir");
      fs::create_directories(o.out_dir);
      for (auto cfg : PrefetcherConfig::valid_set()) {
        const auto path = fs::path(o.out_dir) / (spec.name + "_" + cfg.to_string() + ".csv");
        write_trace(sweep(spec, cfg), path.string());
      }
      std::printf("%s: wrote %d traces to %s\n", spec.name.c_str(), PrefetcherConfig::kValidCount,
                  o.out_dir.c_str());
    } else {
      if (o.out.empty()) throw DataError("sweep: --config requires --out");
      if (o.specs.size() != 1) throw DataError("sweep: --out takes exactly one spec");
      write_trace(sweep(spec, parse_mask_arg(o.config, "sweep --config")), o.out);
      std::printf("%s: wrote %s\n", spec.name.c_str(), o.out.c_str());
    }
  }
  return 0;
}

struct ClusterOpts {
  std::vector<std::string> traces;
  int k = 16;
  std::uint64_t seed = 0;
  std::string out;
  bool dump = false;
  std::vector<int> elbow;
};

int cmd_cluster(const ClusterOpts& o) {
  std::vector<FeatureVector> features;
  for (const auto& t : load_traces(o.traces, false))
    for (const auto& s : t.samples) features.push_back(compute_features(s));

  if (!o.elbow.empty()) {
    const auto scan = elbow_scan(features, o.elbow[0], o.elbow[1], o.seed);
    std::printf("k      wcss\n");
    for (const auto& [k, wcss] : scan) std::printf("%-5d  %.6f\n", k, wcss);
    return 0;
  }

  const PhaseModel model = fit_phase_model(features, o.k, o.seed);
  if (!o.out.empty()) write_phase_file(o.out, model);
  if (o.dump || o.out.empty()) std::fputs(dump_phase_text(model).c_str(), stdout);
  if (!o.out.empty()) std::printf("wrote %s (k=%d over %zu samples)\n", o.out.c_str(), o.k, features.size());
  return 0;
}

struct LabelOpts {
  std::string phases;
  std::vector<std::string> traces;
  std::string table_out;
  std::string out;
  std::uint64_t min_samples = 1;
};

int cmd_label(const LabelOpts& o) {
  const PhaseModel model = read_phase_file(o.phases);
  const auto traces = load_traces(o.traces, true);
  const PhaseConfigTable table = build_phase_table(traces, model);
  const TrainingSet ts = build_training_set(traces, model, table, o.min_samples);
  if (!o.table_out.empty()) write_phase_table_csv(table, o.table_out);
  write_training_set_csv(ts, o.out);
  std::printf("wrote %s (%zu rows over %d phases)\n", o.out.c_str(), ts.size(), model.k());
  return 0;
}

struct TrainOpts {
  std::string phases;
  std::string training_set;
  int depth = 4;
  std::string method = "importance";
  std::uint64_t min_leaf = 1;
  std::string out;
  bool with_phases = false;
};

int cmd_train(const TrainOpts& o) {
  const PhaseModel phases = read_phase_file(o.phases);
  const TrainingSet ts = read_training_set_csv(o.training_set);
  const auto fmap = select_features(ts, phases.scaler, parse_select_method(o.method));
  const DecisionTree tree = train_tree(ts, phases.scaler, fmap, o.depth, o.min_leaf);
  write_model_file(o.out, tree, phases.scaler, o.with_phases ? &phases : nullptr);
  std::printf("features:");
  for (auto id : fmap) std::printf(" %s", kFeatureNames[id]);
  std::printf("\ntraining accuracy: %.4f\n", training_accuracy(tree, ts, phases.scaler));
  std::printf("wrote %s (%zu-byte core blob)\n", o.out.c_str(), core_blob_bytes(o.depth));
  return 0;
}

struct DumpOpts {
  std::string model;
  std::string phases;
};

int cmd_dump(const DumpOpts& o) {
  if (o.model.empty() == o.phases.empty())
    throw DataError("dump: pass exactly one of --model or --phases");
  if (!o.model.empty()) {
    const ModelFile mf = read_model_file(o.model);
    std::fputs(dump_model_text(mf.model).c_str(), stdout);
    if (mf.phases) {
      std::printf("-- embedded phase model --\n");
      std::fputs(dump_phase_text(*mf.phases).c_str(), stdout);
    }
  } else {
    std::fputs(dump_phase_text(read_phase_file(o.phases)).c_str(), stdout);
  }
  return 0;
}

struct EvalOpts {
  std::string model;
  std::vector<std::string> specs;
  std::string out;
};

int cmd_eval(const EvalOpts& o) {
  const Model model = read_model_file(o.model).model;
  std::vector<WorkloadSpec> specs;
  for (const auto& p : o.specs) specs.push_back(read_workload_spec(p));
  const EvalReport report = evaluate(specs, model);
  if (!o.out.empty()) write_eval_csv(report, o.out);
  std::fputs(format_eval_table(report).c_str(), stdout);
  return 0;
}

struct RunOpts {
  std::string model;
  std::string source;
  std::uint32_t period_ms = 100;
  std::string log;
  std::string initial = "0001";
  bool realtime = false;
  bool write_always = false;
};

int cmd_run(const RunOpts& o) {
  AgentConfig cfg;
  cfg.model = read_model_file(o.model).model;
  cfg.period_ms = o.period_ms;
  cfg.initial_mask = parse_mask_arg(o.initial, "run --initial");
  cfg.write_on_change_only = !o.write_always;
  cfg.realtime = o.realtime;

  std::signal(SIGINT, handle_sigint);

  AgentRunResult result;
  if (o.source.starts_with("replay:")) {
    ReplaySource source(read_trace(o.source.substr(7)));
    NullSink sink;
    result = run_agent(cfg, source, sink, g_stop);
  } else if (o.source.starts_with("sim:")) {
    const WorkloadSpec spec = read_workload_spec(o.source.substr(4));
    SimHarness harness(spec, cfg.initial_mask);
    result = run_agent(cfg, harness.source(), harness.sink(), g_stop);
    std::printf("simulation finished in %.1f ticks (oracle %.1f)\n", harness.ticks(),
                spec.oracle_ticks());
  } else if (o.source == "os:") {
    auto source = make_os_source();
    auto sink = make_os_sink();
    result = run_agent(cfg, *source, *sink, g_stop);
  } else {
    throw DataError("run: unknown source '" + o.source + "' (use replay:FILE, sim:FILE, or os:)");
  }

  if (!o.log.empty()) write_decision_log(result.log, o.log);
  std::printf("%llu decisions, %llu source errors\n",
              static_cast<unsigned long long>(result.ticks),
              static_cast<unsigned long long>(result.source_errors));
  return 0;
}

struct PipelineOpts {
  std::string manifest;
};

int cmd_pipeline(const PipelineOpts& o) {
  const PipelineManifest manifest = read_manifest(o.manifest);
  const PipelineResult res = run_pipeline(manifest);
  print_phase_label_table(res);
  std::printf("features:");
  for (auto id : res.feature_map) std::printf(" %s", kFeatureNames[id]);
  std::printf("\ntraining accuracy: %.4f\n", res.training_accuracy);
  std::printf("wrote %s\n", manifest.model_out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phase-based runtime prefetcher selection toolchain"};
  app.require_subcommand(1);

  GenOpts gen;
  auto* cgen = app.add_subcommand("gen", "generate synthetic workload specs and a manifest");
  cgen->add_option("--out", gen.out_dir, "output directory")->required();
  cgen->add_option("--workloads", gen.workloads, "number of workloads");
  cgen->add_option("--seed", gen.seed, "generator seed");
  cgen->add_option("--noise", gen.noise, "counter noise sigma");
  cgen->add_option("--archetypes", gen.archetypes, "phase archetype count");
  cgen->add_option("--k", gen.k, "cluster count written to the manifest");
  cgen->add_option("--depth", gen.depth, "tree depth written to the manifest");
  cgen->add_flag("--manifest,!--no-manifest", gen.manifest, "write manifest.toml");

  SweepOpts sw;
  auto* csweep = app.add_subcommand("sweep", "record counter traces under fixed configs");
  csweep->add_option("specs", sw.specs, "workload spec files")->required();
  csweep->add_option("--config", sw.config, "single 4-bit config mask");
  csweep->add_option("--out", sw.out, "output trace (with --config)");
  csweep->add_flag("--all", sw.all, "sweep every valid config");
  csweep->add_option("--out-dir", sw.out_dir, "output directory (with --all)");

  ClusterOpts cl;
  auto* ccluster = app.add_subcommand("cluster", "fit the min-max scaler and k-means phase model");
  ccluster->add_option("--traces", cl.traces, "baseline trace files")->required();
  ccluster->add_option("--k", cl.k, "cluster count");
  ccluster->add_option("--seed", cl.seed, "k-means++ seed");
  ccluster->add_option("--out", cl.out, "output phase model (.pfph)");
  ccluster->add_flag("--dump", cl.dump, "print the fitted model");
  ccluster->add_option("--elbow", cl.elbow, "scan k range MIN MAX and print WCSS")->expected(2);

  LabelOpts lb;
  auto* clabel = app.add_subcommand("label", "build the phase/config IPC table and training set");
  clabel->add_option("--phases", lb.phases, "phase model file")->required();
  clabel->add_option("--traces", lb.traces, "trace files (all configs)")->required();
  clabel->add_option("--table", lb.table_out, "phase/config table CSV");
  clabel->add_option("--out", lb.out, "training set CSV")->required();
  clabel->add_option("--min-samples", lb.min_samples, "per-config eligibility threshold");

  TrainOpts tr;
  auto* ctrain = app.add_subcommand("train", "select features and train the decision tree");
  ctrain->add_option("--phases", tr.phases, "phase model file (scaler source)")->required();
  ctrain->add_option("--training-set", tr.training_set, "training set CSV")->required();
  ctrain->add_option("--depth", tr.depth, "tree depth limit");
  ctrain->add_option("--method", tr.method, "feature selection: importance|exhaustive");
  ctrain->add_option("--min-leaf", tr.min_leaf, "minimum rows to keep splitting");
  ctrain->add_option("--out", tr.out, "output model (.pfm)")->required();
  ctrain->add_flag("--with-phases", tr.with_phases, "embed the phase model in the container");

  DumpOpts dm;
  auto* cdump = app.add_subcommand("dump", "print a model or phase file as text");
  cdump->add_option("--model", dm.model, "model file (.pfm)");
  cdump->add_option("--phases", dm.phases, "phase model file (.pfph)");

  EvalOpts ev;
  auto* ceval = app.add_subcommand("eval", "closed-loop speedup report vs default/off/on/oracle");
  ceval->add_option("--model", ev.model, "model file")->required();
  ceval->add_option("specs", ev.specs, "workload spec files")->required();
  ceval->add_option("--out", ev.out, "report CSV");

  RunOpts rn;
  auto* crun = app.add_subcommand("run", "run the periodic selection agent");
  crun->add_option("--model", rn.model, "model file")->required();
  crun->add_option("--source", rn.source, "replay:FILE | sim:FILE | os:")->required();
  crun->add_option("--period-ms", rn.period_ms, "sampling period");
  crun->add_option("--log", rn.log, "decision log CSV");
  crun->add_option("--initial", rn.initial, "initial/restore mask");
  crun->add_flag("--realtime", rn.realtime, "pace polls by the period");
  crun->add_flag("--write-always", rn.write_always, "apply the mask every tick, not only on change");

  PipelineOpts pl;
  auto* cpipe = app.add_subcommand("pipeline", "run sweep->cluster->label->train end to end");
  cpipe->add_option("--manifest", pl.manifest, "pipeline manifest")->required();

  try {
    app.parse(argc, argv);
    if (cgen->parsed()) return cmd_gen(gen);
    if (csweep->parsed()) return cmd_sweep(sw);
    if (ccluster->parsed()) return cmd_cluster(cl);
    if (clabel->parsed()) return cmd_label(lb);
    if (ctrain->parsed()) return cmd_train(tr);
    if (cdump->parsed()) return cmd_dump(dm);
    if (ceval->parsed()) return cmd_eval(ev);
    if (crun->parsed()) return cmd_run(rn);
    if (cpipe->parsed()) return cmd_pipeline(pl);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}

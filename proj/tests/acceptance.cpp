// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run via `ctest -R acceptance` or directly from the build tree.

#include <atomic>
#include <cmath>
#include <initializer_list>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pfsel/pfsel.hpp"
#include "test_specs.hpp"

using namespace pfsel;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail = "") {
  std::printf("[%s] %d. %s%s%s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              detail.empty() ? "" : ": ", detail.c_str());
  if (!pass) ++g_failures;
}

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

// ---- 1. model size ---------------------------------------------------------

void criterion_model_size() {
  Rng rng(1001);
  const Scaler scaler = oracles::identity_scaler();
  bool ok = core_blob_bits(4) == 334 && core_blob_bytes(4) == 42;
  std::string detail = "334 bits in 42 bytes";
  for (int i = 0; ok && i < 100; ++i) {
    const TrainingSet ts = oracles::random_training_set(rng, 150 + (i % 5) * 40);
    const auto fmap = select_features(ts, scaler);
    const DecisionTree tree = train_tree(ts, scaler, fmap, 4);
    const auto core = encode_core(tree);
    if (core.size() != 42) {
      ok = false;
      detail = fmt("tree %d produced a %zu-byte core blob", i, core.size());
    }
  }
  report(1, "model size: depth-4 core blob is exactly 42 bytes for 100 trained trees", ok, detail);
}

// ---- 2. codec fidelity -----------------------------------------------------

void criterion_codec_fidelity() {
  Rng rng(2002);
  const Scaler scaler = oracles::identity_scaler();
  const double margin = 2.0 / 65535.0;
  bool ok = true;
  std::string detail;
  std::size_t predictions = 0;

  for (int t = 0; ok && t < 100; ++t) {
    const DecisionTree tree = oracles::random_tree(rng, 4);
    const Model back = decode(encode(tree, scaler));
    const SlotScaler narrowed = SlotScaler::narrow(scaler, tree.feature_map);

    if (back.tree.depth != tree.depth || back.tree.feature_map != tree.feature_map ||
        back.scaler != narrowed) {
      ok = false;
      detail = "header fields not preserved";
      break;
    }
    for (std::size_t n = 0; ok && n < tree.nodes.size(); ++n) {
      if (back.tree.nodes[n].slot != tree.nodes[n].slot) {
        ok = false;
        detail = "slot id changed in roundtrip";
      }
      if (std::abs(back.tree.nodes[n].threshold - tree.nodes[n].threshold) > 1.0 / 65535.0) {
        ok = false;
        detail = "threshold drifted beyond 1/65535";
      }
    }
    for (std::size_t l = 0; ok && l < tree.leaves.size(); ++l)
      if (back.tree.leaves[l] != tree.leaves[l]) {
        ok = false;
        detail = "leaf mask changed in roundtrip";
      }

    // 100 boundary-safe inputs per tree -> 10,000 equivalence checks
    int accepted = 0;
    while (ok && accepted < 100) {
      const FeatureVector x = oracles::random_features(rng);
      bool near = false;
      for (const auto& nd : tree.nodes) {
        const double v = narrowed.apply(nd.slot, x[tree.feature_map[nd.slot]]);
        if (std::abs(v - nd.threshold) <= margin) {
          near = true;
          break;
        }
      }
      if (near) continue;
      ++accepted;
      ++predictions;
      if (predict(tree, x, narrowed) != predict(back.tree, x, back.scaler)) {
        ok = false;
        detail = "prediction diverged away from quantization boundaries";
      }
    }
  }
  if (ok) detail = fmt("%zu prediction equivalences", predictions);
  report(2, "codec fidelity: decode(encode) exact structure, thresholds within 1/65535", ok, detail);
}

// ---- 3. oracle equivalences -------------------------------------------------

void criterion_oracles() {
  Rng rng(3003);
  bool ok = true;
  std::string detail;

  // k-means assignment on the fitted data
  {
    std::vector<ScaledVec> pts;
    for (int i = 0; i < 1200; ++i) pts.push_back(oracles::random_scaled(rng));
    PhaseModel model;
    model.scaler = oracles::identity_scaler();
    model.centers = kmeans_fit(pts, 10, 30);
    for (const auto& p : pts) {
      if (classify_phase(model, FeatureVector::from_array(p)) != oracles::nearest_center(model.centers, p)) {
        ok = false;
        detail = "k-means assignment mismatch";
        break;
      }
    }
    // fresh vectors
    for (int i = 0; ok && i < 1000; ++i) {
      const auto p = oracles::random_scaled(rng);
      if (classify_phase(model, FeatureVector::from_array(p)) != oracles::nearest_center(model.centers, p)) {
        ok = false;
        detail = "phase classification mismatch";
      }
    }
  }

  // per-phase argmax labeling
  for (int rep = 0; ok && rep < 1000; ++rep) {
    PhaseConfigTable table(1);
    for (auto cfg : PrefetcherConfig::valid_set())
      table.cell(0, cfg) = {rng.below(4), (rng.below(5) + 1) * 0.25};
    const std::uint64_t min_samples = 1 + rng.below(2);
    const auto expect = oracles::argmax_config(table, 0, min_samples);
    try {
      const PrefetcherConfig got = best_config(table, 0, min_samples);
      if (!expect || got != *expect) {
        ok = false;
        detail = "argmax labeling mismatch";
      }
    } catch (const DataError&) {
      if (expect) {
        ok = false;
        detail = "argmax labeling errored where the oracle found a config";
      }
    }
  }

  // tree inference
  {
    const Scaler scaler = oracles::identity_scaler();
    for (int rep = 0; ok && rep < 1000; ++rep) {
      const DecisionTree tree = oracles::random_tree(rng, 4);
      const FeatureVector x = oracles::random_features(rng);
      std::array<double, 4> slot_values{};
      for (int j = 0; j < 4; ++j)
        slot_values[j] = scaler.apply(tree.feature_map[j], x[tree.feature_map[j]]);
      if (predict(tree, x, scaler) != oracles::tree_eval(tree, slot_values)) {
        ok = false;
        detail = "tree inference mismatch";
      }
    }
  }

  report(3, "oracle equivalences: k-means, classification, argmax labels, tree inference", ok, detail);
}

// ---- 4. planted-optimum recovery --------------------------------------------

PipelineResult planted_pipeline(const WorkloadSpec& spec) {
  PipelineInputs in;
  in.traces = test_specs::sweep_all(spec);
  in.k = static_cast<int>(spec.segments.size());
  in.seed = 9;
  in.depth = 4;
  return run_pipeline(in);
}

void criterion_planted_recovery() {
  const WorkloadSpec spec = test_specs::planted_three_phase();
  const PipelineResult res = planted_pipeline(spec);
  bool ok = true;
  std::string detail;

  for (const auto& seg : spec.segments) {
    CounterSample probe;
    probe.instructions = static_cast<std::uint64_t>(seg.base_rates[0]);
    probe.mem_accesses = static_cast<std::uint64_t>(seg.base_rates[1]);
    probe.branch_misses = static_cast<std::uint64_t>(seg.base_rates[2]);
    probe.cache_misses = static_cast<std::uint64_t>(seg.base_rates[3]);
    probe.cpu_cycles = static_cast<std::uint64_t>(seg.base_rates[4]);
    probe.l2d_refills = static_cast<std::uint64_t>(seg.base_rates[5]);
    probe.l2i_refills = static_cast<std::uint64_t>(seg.base_rates[6]);
    const int phase = classify_phase(res.phases, compute_features(probe));
    if (best_config(res.table, phase) != seg.planted_best()) {
      ok = false;
      detail = "phase label differs from the planted optimum";
    }
  }
  std::map<int, PrefetcherConfig> label_of;
  for (const auto& row : res.training) {
    auto [it, inserted] = label_of.emplace(row.phase_id, row.label);
    if (it->second != row.label) {
      ok = false;
      detail = "labels not constant within a phase";
    }
  }
  if (res.training_accuracy != 1.0) {
    ok = false;
    detail = fmt("depth-4 training accuracy %.4f != 1.0", res.training_accuracy);
  }

  const Model model{res.tree, SlotScaler::narrow(res.phases.scaler, res.feature_map)};
  const double agent_ticks = closed_loop(spec, model);
  const double oracle = spec.oracle_ticks();
  if (agent_ticks > 1.05 * oracle) {
    ok = false;
    detail = fmt("agent %.1f ticks vs oracle %.1f (>5%%)", agent_ticks, oracle);
  }
  if (ok)
    detail = fmt("labels exact, accuracy 1.0, agent/oracle = %.4f", agent_ticks / oracle);
  report(4, "planted-optimum recovery on a noise-free 3-phase 12-config sweep", ok, detail);
}

// ---- 5. generalization to held-out workloads --------------------------------

void criterion_generalization() {
  const auto library = make_archetype_library(7, 6);
  GenOptions opt;
  opt.noise_sigma = 0.05;

  PipelineInputs in;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const WorkloadSpec w = make_workload(library, seed, opt, "train" + std::to_string(seed));
    for (auto cfg : PrefetcherConfig::valid_set()) in.traces.push_back(sweep(w, cfg));
  }
  in.k = 16;
  in.seed = 42;
  in.depth = 4;
  in.method = FeatureSelectMethod::kExhaustive;
  const PipelineResult res = run_pipeline(in);
  const Model model{res.tree, SlotScaler::narrow(res.phases.scaler, res.feature_map)};

  std::vector<WorkloadSpec> held_out;
  for (std::uint64_t seed = 201; seed <= 220; ++seed)
    held_out.push_back(make_workload(library, seed, opt, "holdout" + std::to_string(seed)));
  const EvalReport report_eval = evaluate(held_out, model);

  const double agent_gain = report_eval.geomean_policy - 1.0;
  const double oracle_gain = report_eval.geomean_oracle - 1.0;
  const bool ok = report_eval.geomean_policy >= 1.0 && agent_gain >= 0.8 * oracle_gain;
  report(5, "generalization: 20 held-out noisy workloads",
         ok,
         fmt("geomean %.4f (oracle %.4f, captured %.0f%% of the gain)", report_eval.geomean_policy,
             report_eval.geomean_oracle, oracle_gain > 0 ? 100.0 * agent_gain / oracle_gain : 100.0));
}

// ---- 6. depth capacity monotonicity -----------------------------------------

void criterion_depth_monotonicity() {
  bool ok = true;
  std::string detail;
  std::vector<TrainingSet> sets;
  std::vector<Scaler> scalers;

  {
    const PipelineResult res = planted_pipeline(test_specs::planted_three_phase());
    sets.push_back(res.training);
    scalers.push_back(res.phases.scaler);
  }
  for (std::uint64_t seed = 60; seed < 65; ++seed) {
    const auto library = make_archetype_library(seed, 5);
    GenOptions opt;
    opt.noise_sigma = 0.03;
    PipelineInputs in;
    const WorkloadSpec w = make_workload(library, seed + 1, opt, "mono");
    for (auto cfg : PrefetcherConfig::valid_set()) in.traces.push_back(sweep(w, cfg));
    in.k = 8;
    in.seed = 3;
    const PipelineResult res = run_pipeline(in);
    sets.push_back(res.training);
    scalers.push_back(res.phases.scaler);
  }

  for (std::size_t i = 0; ok && i < sets.size(); ++i) {
    const auto fmap = select_features(sets[i], scalers[i]);
    const double a1 = training_accuracy(train_tree(sets[i], scalers[i], fmap, 1), sets[i], scalers[i]);
    const double a2 = training_accuracy(train_tree(sets[i], scalers[i], fmap, 2), sets[i], scalers[i]);
    const double a4 = training_accuracy(train_tree(sets[i], scalers[i], fmap, 4), sets[i], scalers[i]);
    if (!(a4 >= a2 && a2 >= a1)) {
      ok = false;
      detail = fmt("set %zu: acc(1)=%.4f acc(2)=%.4f acc(4)=%.4f", i, a1, a2, a4);
    }
  }
  report(6, "depth capacity: accuracy(4) >= accuracy(2) >= accuracy(1) on every set", ok, detail);
}

// ---- 7. distribution shift ---------------------------------------------------

void criterion_distribution_shift() {
  const WorkloadSpec spec = test_specs::planted_three_phase();
  const PipelineResult res = planted_pipeline(spec);
  const Model model{res.tree, SlotScaler::narrow(res.phases.scaler, res.feature_map)};

  bool ok = true;
  std::string detail;
  double worst = 0;
  for (std::uint64_t seed : {5ull, 6ull, 7ull}) {
    const WorkloadSpec shifted = shift_multipliers(spec, seed, 0.20);
    const double ticks = closed_loop(shifted, model);
    const double oracle = shifted.oracle_ticks();
    worst = std::max(worst, ticks / oracle);
    if (ticks > 1.10 * oracle) {
      ok = false;
      detail = fmt("seed %llu: %.1f ticks vs oracle %.1f", static_cast<unsigned long long>(seed),
                   ticks, oracle);
    }
  }
  if (ok) detail = fmt("worst agent/oracle = %.4f under +-20%% retargeting", worst);
  report(7, "distribution shift: stale model stays within 10% of the shifted oracle", ok, detail);
}

// ---- 8. agent invariants ------------------------------------------------------

class RecordingSink final : public ConfigSink {
public:
  void apply(PrefetcherConfig mask) override { applied.push_back(mask); }
  std::vector<PrefetcherConfig> applied;
};

class FlakySource final : public CounterSource {
public:
  FlakySource(std::vector<CounterSample> samples, int fail_every)
      : samples_(std::move(samples)), fail_every_(fail_every) {}
  PollResult poll() override {
    ++polls_;
    if (polls_ % fail_every_ == 0) return PollResult::fail("injected");
    if (next_ >= samples_.size()) return PollResult::end();
    return PollResult::ok(samples_[next_++]);
  }

private:
  std::vector<CounterSample> samples_;
  int fail_every_;
  int polls_ = 0;
  std::size_t next_ = 0;
};

void criterion_agent_invariants() {
  bool ok = true;
  std::string detail;

  const WorkloadSpec spec = test_specs::planted_three_phase();
  const PipelineResult res = planted_pipeline(spec);
  AgentConfig cfg;
  cfg.model = Model{res.tree, SlotScaler::narrow(res.phases.scaler, res.feature_map)};

  const Trace trace = sweep(spec, PrefetcherConfig::platform_default());

  // replay determinism
  auto run_once = [&] {
    ReplaySource source(trace);
    NullSink sink;
    std::atomic<bool> stop{false};
    const auto result = run_agent(cfg, source, sink, stop);
    std::ostringstream out;
    write_decision_log(result.log, out);
    return out.str();
  };
  if (run_once() != run_once()) {
    ok = false;
    detail = "replay produced differing decision logs";
  }

  // write-on-change idempotence
  {
    RecordingSink sink;
    AgentState st;
    st.model = &cfg.model;
    st.sink = &sink;
    st.applied = cfg.initial_mask;
    const CounterSample s = trace.samples[0];
    const PrefetcherConfig first = agent_tick(st, s);
    agent_tick(st, s);
    const std::size_t expected = first == cfg.initial_mask ? 0 : 1;
    if (sink.applied.size() != expected) {
      ok = false;
      detail = "identical samples produced extra sink writes";
    }
  }

  // fail-safe mask retention under injected source errors
  {
    FlakySource source(trace.samples, 4);
    RecordingSink sink;
    std::atomic<bool> stop{false};
    const auto result = run_agent(cfg, source, sink, stop);
    if (result.source_errors == 0) {
      ok = false;
      detail = "flaky source produced no recorded errors";
    }
    for (auto mask : sink.applied)
      if (!mask.is_valid()) {
        ok = false;
        detail = "sink saw a mask outside the valid set";
      }
    if (result.log.size() != trace.samples.size()) {
      ok = false;
      detail = fmt("expected %zu decisions, got %zu", trace.samples.size(), result.log.size());
    }
  }
  {
    // a source that only ever fails leaves the sink exactly as it started
    class ErrorsThenEnd final : public CounterSource {
     public:
      PollResult poll() override {
        return remaining_-- > 0 ? PollResult::fail("injected") : PollResult::end();
      }
     private:
      int remaining_ = 25;
    };
    ErrorsThenEnd source;
    RecordingSink sink;
    std::atomic<bool> stop{false};
    const auto result = run_agent(cfg, source, sink, stop);
    if (result.source_errors != 25 || !result.log.empty() || sink.applied.size() != 2 ||
        sink.applied[0] != cfg.initial_mask || sink.applied[1] != cfg.initial_mask) {
      ok = false;
      detail = "error-only source changed the applied mask";
    }
  }

  report(8, "agent invariants: replay determinism, idempotent writes, fail-safe errors", ok, detail);
}

}  // namespace

int main() {
  criterion_model_size();
  criterion_codec_fidelity();
  criterion_oracles();
  criterion_planted_recovery();
  criterion_generalization();
  criterion_depth_monotonicity();
  criterion_distribution_shift();
  criterion_agent_invariants();

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}

#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <vector>

#include "oracles.hpp"
#include "pfsel/labeling.hpp"

using namespace pfsel;

namespace {

// Samples whose features are controlled through two knobs: ipc (instructions
// over fixed cycles) and the cache miss ratio r (misses over fixed accesses).
CounterSample make_sample(double ipc, double miss_ratio, std::int64_t ts) {
  CounterSample s;
  s.timestamp_ms = ts;
  s.cpu_cycles = 1000000;
  s.instructions = static_cast<std::uint64_t>(ipc * 1000000);
  s.mem_accesses = 100000;
  s.cache_misses = static_cast<std::uint64_t>(miss_ratio * 100000);
  return s;
}

Trace make_trace(PrefetcherConfig cfg, const std::vector<std::pair<double, double>>& ipc_ratio) {
  Trace t;
  t.meta.workload_name = "t_" + cfg.to_string();
  t.meta.config = cfg;
  std::int64_t ts = 0;
  for (auto [ipc, r] : ipc_ratio) t.samples.push_back(make_sample(ipc, r, ts += 100));
  return t;
}

// Two phases split by the miss ratio: r=0.1 -> phase 0, r=0.9 -> phase 1.
PhaseModel two_phase_model() {
  PhaseModel m;
  m.scaler.min.fill(0.0);
  m.scaler.max = {4.0, 200.0, 1.0, 200.0, 1.0, 1.0, 1.0};
  m.centers.push_back(m.scaler.apply(compute_features(make_sample(1.0, 0.1, 0))));
  m.centers.push_back(m.scaler.apply(compute_features(make_sample(1.0, 0.9, 0))));
  return m;
}

PhaseModel one_phase_model() {
  PhaseModel m = two_phase_model();
  m.centers.resize(1);
  return m;
}

}  // namespace

TEST_CASE("build_phase_table: mean of {1.0, 3.0} is 2.0") {
  const auto model = one_phase_model();
  std::vector<Trace> traces{make_trace(PrefetcherConfig::off(), {{1.0, 0.1}, {3.0, 0.1}})};
  const auto table = build_phase_table(traces, model);
  CHECK(table.cell(0, PrefetcherConfig::off()).sample_count == 2);
  CHECK(table.cell(0, PrefetcherConfig::off()).mean_ipc == 2.0);
  CHECK(table.cell(0, PrefetcherConfig::all_on()).sample_count == 0);
}

TEST_CASE("build_phase_table: identical samples under two configs give identical means") {
  const auto model = two_phase_model();
  const std::vector<std::pair<double, double>> vals{{0.5, 0.1}, {1.5, 0.1}, {2.5, 0.9}};
  std::vector<Trace> traces{make_trace(PrefetcherConfig{0b0001}, vals),
                            make_trace(PrefetcherConfig{0b0100}, vals)};
  const auto table = build_phase_table(traces, model);
  for (int p = 0; p < 2; ++p) {
    const auto& a = table.cell(p, PrefetcherConfig{0b0001});
    const auto& b = table.cell(p, PrefetcherConfig{0b0100});
    CHECK(a.sample_count == b.sample_count);
    CHECK(a.mean_ipc == b.mean_ipc);
  }
}

TEST_CASE("build_phase_table: trace without a recorded config is an error") {
  const auto model = one_phase_model();
  std::vector<Trace> traces{make_trace(PrefetcherConfig::off(), {{1.0, 0.1}})};
  traces[0].meta.config.reset();
  CHECK_THROWS_AS(build_phase_table(traces, model), DataError);
}

TEST_CASE("build_phase_table: matches an independent group-by/mean oracle") {
  Rng rng(404);
  std::vector<FeatureVector> basis;
  for (int i = 0; i < 200; ++i) basis.push_back(oracles::random_features(rng));
  PhaseModel model;
  model.scaler = oracles::identity_scaler();
  std::vector<ScaledVec> scaled;
  for (const auto& f : basis) scaled.push_back(model.scaler.apply(f));
  model.centers = kmeans_fit(scaled, 5, 8);

  std::vector<Trace> traces;
  std::vector<std::tuple<int, std::uint8_t, double>> oracle_rows;
  for (int t = 0; t < 8; ++t) {
    const PrefetcherConfig cfg = oracles::random_valid_config(rng);
    Trace trace;
    trace.meta.workload_name = "w" + std::to_string(t);
    trace.meta.config = cfg;
    std::int64_t ts = 0;
    for (int i = 0; i < 100; ++i) {
      const CounterSample s = oracles::random_sample(rng);
      CounterSample with_ts = s;
      with_ts.timestamp_ms = ts += 100;
      trace.samples.push_back(with_ts);
      const FeatureVector f = compute_features(with_ts);
      const double ipc =
          with_ts.cpu_cycles == 0 ? 0.0 : double(with_ts.instructions) / double(with_ts.cpu_cycles);
      oracle_rows.emplace_back(classify_phase(model, f), cfg.mask, ipc);
    }
    traces.push_back(trace);
  }

  const auto table = build_phase_table(traces, model);
  const auto expected = oracles::group_by_mean(oracle_rows);
  for (int p = 0; p < model.k(); ++p) {
    for (auto cfg : PrefetcherConfig::valid_set()) {
      const auto& cell = table.cell(p, cfg);
      auto it = expected.find({p, cfg.mask});
      if (it == expected.end()) {
        CHECK(cell.sample_count == 0);
      } else {
        CHECK(cell.sample_count == it->second.count);
        CHECK_THAT(cell.mean_ipc, Catch::Matchers::WithinRel(it->second.mean, 1e-12));
      }
    }
  }
}

TEST_CASE("best_config: single eligible config wins") {
  PhaseConfigTable table(1);
  table.cell(0, PrefetcherConfig{0b0101}) = {10, 1.5};
  CHECK(best_config(table, 0) == PrefetcherConfig{0b0101});
}

TEST_CASE("best_config: equal means break toward the lower mask") {
  const auto model = two_phase_model();
  const std::vector<std::pair<double, double>> vals{{1.0, 0.1}, {2.0, 0.9}};
  std::vector<Trace> traces{make_trace(PrefetcherConfig{0b0100}, vals),
                            make_trace(PrefetcherConfig{0b0001}, vals)};
  const auto table = build_phase_table(traces, model);
  CHECK(best_config(table, 0) == PrefetcherConfig{0b0001});
  CHECK(best_config(table, 1) == PrefetcherConfig{0b0001});
}

TEST_CASE("best_config: min_samples filters sparse configs; no eligible config errors") {
  PhaseConfigTable table(1);
  table.cell(0, PrefetcherConfig{0b0001}) = {1, 9.0};   // sparse outlier
  table.cell(0, PrefetcherConfig{0b0101}) = {50, 1.2};
  CHECK(best_config(table, 0, 1) == PrefetcherConfig{0b0001});
  CHECK(best_config(table, 0, 5) == PrefetcherConfig{0b0101});
  CHECK_THROWS_MATCHES(best_config(table, 0, 100), DataError,
                       Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("sweep")));
}

TEST_CASE("best_config: matches the exhaustive argmax oracle on random tables") {
  Rng rng(777);
  for (int rep = 0; rep < 1000; ++rep) {
    PhaseConfigTable table(1);
    for (auto cfg : PrefetcherConfig::valid_set()) {
      const std::uint64_t count = rng.below(4);  // 0..3, some below min_samples
      const double mean = (rng.below(5) + 1) * 0.25;  // deliberate tie collisions
      table.cell(0, cfg) = {count, count == 0 ? 0.0 : mean};
    }
    const std::uint64_t min_samples = 1 + rng.below(2);
    const auto expect = oracles::argmax_config(table, 0, min_samples);
    if (!expect) {
      CHECK_THROWS_AS(best_config(table, 0, min_samples), DataError);
    } else {
      CHECK(best_config(table, 0, min_samples) == *expect);
    }
  }
}

TEST_CASE("build_training_set: labels are constant within a phase and match the planted optimum") {
  const auto model = two_phase_model();
  // phase 0 runs better under 0101, phase 1 under 1111
  std::vector<Trace> traces;
  for (auto cfg : PrefetcherConfig::valid_set()) {
    double ipc0 = 1.0, ipc1 = 1.0;
    if (cfg == PrefetcherConfig{0b0101}) ipc0 = 2.0;
    if (cfg == PrefetcherConfig::all_on()) ipc1 = 2.0;
    traces.push_back(make_trace(cfg, {{ipc0, 0.1}, {ipc1, 0.9}, {ipc0, 0.1}}));
  }
  const auto table = build_phase_table(traces, model);
  const auto ts = build_training_set(traces, model, table);
  REQUIRE(ts.size() == traces.size() * 3);
  for (const auto& row : ts.rows) {
    if (row.phase_id == 0) CHECK(row.label == PrefetcherConfig{0b0101});
    if (row.phase_id == 1) CHECK(row.label == PrefetcherConfig::all_on());
  }
  std::map<int, PrefetcherConfig> seen;
  for (const auto& row : ts.rows) {
    auto [it, inserted] = seen.emplace(row.phase_id, row.label);
    CHECK(it->second == row.label);
  }
}

TEST_CASE("build_training_set: empty trace list gives an empty set") {
  const auto model = one_phase_model();
  PhaseConfigTable table(1);
  std::vector<Trace> traces;
  CHECK(build_training_set(traces, model, table).empty());
}

TEST_CASE("phase table: weighted recombination recovers total IPC mass") {
  Rng rng(31337);
  std::vector<FeatureVector> basis;
  for (int i = 0; i < 100; ++i) basis.push_back(oracles::random_features(rng));
  PhaseModel model;
  model.scaler = oracles::identity_scaler();
  std::vector<ScaledVec> scaled;
  for (const auto& f : basis) scaled.push_back(model.scaler.apply(f));
  model.centers = kmeans_fit(scaled, 4, 2);

  std::vector<Trace> traces;
  std::vector<double> direct_mass(model.k(), 0.0);
  for (int t = 0; t < 6; ++t) {
    Trace trace;
    trace.meta.config = oracles::random_valid_config(rng);
    std::int64_t ts = 0;
    for (int i = 0; i < 200; ++i) {
      CounterSample s = oracles::random_sample(rng);
      s.timestamp_ms = ts += 100;
      trace.samples.push_back(s);
      const FeatureVector f = compute_features(s);
      direct_mass[classify_phase(model, f)] += f.ipc;
    }
    traces.push_back(trace);
  }

  const auto table = build_phase_table(traces, model);
  for (int p = 0; p < model.k(); ++p) {
    double recombined = 0;
    for (auto cfg : PrefetcherConfig::valid_set()) {
      const auto& cell = table.cell(p, cfg);
      recombined += static_cast<double>(cell.sample_count) * cell.mean_ipc;
    }
    CHECK_THAT(recombined, Catch::Matchers::WithinRel(direct_mass[p], 1e-9));
  }
}

TEST_CASE("csv exports: phase table and training set round-trip") {
  const auto model = two_phase_model();
  std::vector<Trace> traces{make_trace(PrefetcherConfig::off(), {{1.0, 0.1}, {2.0, 0.9}}),
                            make_trace(PrefetcherConfig::all_on(), {{1.5, 0.1}, {0.5, 0.9}})};
  const auto table = build_phase_table(traces, model);
  const auto ts = build_training_set(traces, model, table);

  std::ostringstream table_csv;
  write_phase_table_csv(table, table_csv);
  CHECK(table_csv.str().starts_with("phase_id,config_mask,sample_count,mean_ipc\n"));
  CHECK(table_csv.str().find("0,0000,1,1") != std::string::npos);

  std::ostringstream ts_csv;
  write_training_set_csv(ts, ts_csv);
  std::istringstream in(ts_csv.str());
  const TrainingSet back = parse_training_set_csv(in, "ts.csv");
  REQUIRE(back.size() == ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(back.rows[i].x == ts.rows[i].x);  // %.17g doubles survive exactly
    CHECK(back.rows[i].label == ts.rows[i].label);
    CHECK(back.rows[i].phase_id == ts.rows[i].phase_id);
  }
}

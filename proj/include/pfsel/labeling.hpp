#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "pfsel/errors.hpp"
#include "pfsel/num_io.hpp"
#include "pfsel/phase.hpp"
#include "pfsel/trace.hpp"
#include "pfsel/trace_io.hpp"

namespace pfsel {

struct PhaseConfigCell {
  std::uint64_t sample_count = 0;
  double mean_ipc = 0.0;
};

// Dense k x 12 aggregate: per (phase, valid config), how many samples landed
// there and their mean IPC.
class PhaseConfigTable {
public:
  PhaseConfigTable() = default;
  explicit PhaseConfigTable(int phases)
      : phases_(phases), cells_(static_cast<std::size_t>(phases) * PrefetcherConfig::kValidCount) {}

  int phases() const { return phases_; }

  PhaseConfigCell& cell(int phase, PrefetcherConfig config) {
    return cells_[index(phase, config)];
  }
  const PhaseConfigCell& cell(int phase, PrefetcherConfig config) const {
    return cells_[index(phase, config)];
  }

private:
  std::size_t index(int phase, PrefetcherConfig config) const {
    const int ci = PrefetcherConfig::valid_index(config);
    if (ci < 0) throw DataError("phase table: config " + config.to_string() + " not in valid set");
    if (phase < 0 || phase >= phases_) throw DataError("phase table: phase out of range");
    return static_cast<std::size_t>(phase) * PrefetcherConfig::kValidCount + ci;
  }

  int phases_ = 0;
  std::vector<PhaseConfigCell> cells_;
};

// Classifies every sample of every trace and accumulates count and mean IPC
// per (phase, recorded config).
inline PhaseConfigTable build_phase_table(std::span<const Trace> traces, const PhaseModel& model) {
  PhaseConfigTable table(model.k());
  std::vector<double> sum(static_cast<std::size_t>(model.k()) * PrefetcherConfig::kValidCount, 0.0);
  for (const auto& trace : traces) {
    if (!trace.meta.config)
      throw DataError("build_phase_table: trace '" + trace.meta.workload_name +
                      "' has no recorded config");
    const PrefetcherConfig cfg = *trace.meta.config;
    const int ci = PrefetcherConfig::valid_index(cfg);
    if (ci < 0) throw DataError("build_phase_table: config " + cfg.to_string() + " not in valid set");
    for (const auto& s : trace.samples) {
      const FeatureVector f = compute_features(s);
      const int phase = classify_phase(model, f);
      auto& c = table.cell(phase, cfg);
      ++c.sample_count;
      sum[static_cast<std::size_t>(phase) * PrefetcherConfig::kValidCount + ci] += f.ipc;
    }
  }
  for (int p = 0; p < model.k(); ++p) {
    for (auto cfg : PrefetcherConfig::valid_set()) {
      auto& c = table.cell(p, cfg);
      if (c.sample_count > 0)
        c.mean_ipc = sum[static_cast<std::size_t>(p) * PrefetcherConfig::kValidCount +
                         PrefetcherConfig::valid_index(cfg)] /
                     static_cast<double>(c.sample_count);
    }
  }
  return table;
}

// Argmax of mean IPC over configs with at least min_samples samples for this
// phase; ties broken toward the lowest mask value.
inline PrefetcherConfig best_config(const PhaseConfigTable& table, int phase,
                                    std::uint64_t min_samples = 1) {
  bool found = false;
  PrefetcherConfig best{};
  double best_ipc = 0;
  for (auto cfg : PrefetcherConfig::valid_set()) {  // ascending mask order
    const auto& c = table.cell(phase, cfg);
    if (c.sample_count < min_samples) continue;
    if (!found || c.mean_ipc > best_ipc) {
      found = true;
      best = cfg;
      best_ipc = c.mean_ipc;
    }
  }
  if (!found)
    throw DataError("best_config: phase " + std::to_string(phase) +
                    " has no config with >= " + std::to_string(min_samples) +
                    " samples; collect more sweep data");
  return best;
}

struct TrainingRow {
  FeatureVector x;
  PrefetcherConfig label;
  int phase_id = 0;
};

struct TrainingSet {
  std::vector<TrainingRow> rows;

  bool empty() const { return rows.empty(); }
  std::size_t size() const { return rows.size(); }
  auto begin() const { return rows.begin(); }
  auto end() const { return rows.end(); }
};

// One row per sample of every trace (all configs contribute feature rows);
// the label is the best config of the sample's phase.
inline TrainingSet build_training_set(std::span<const Trace> traces, const PhaseModel& model,
                                      const PhaseConfigTable& table,
                                      std::uint64_t min_samples = 1) {
  TrainingSet ts;
  std::vector<PrefetcherConfig> label_of_phase(model.k());
  std::vector<bool> resolved(model.k(), false);
  for (const auto& trace : traces) {
    for (const auto& s : trace.samples) {
      const FeatureVector f = compute_features(s);
      const int phase = classify_phase(model, f);
      if (!resolved[phase]) {
        label_of_phase[phase] = best_config(table, phase, min_samples);
        resolved[phase] = true;
      }
      ts.rows.push_back({f, label_of_phase[phase], phase});
    }
  }
  return ts;
}

inline constexpr std::string_view kPhaseTableHeader = "phase_id,config_mask,sample_count,mean_ipc";

inline void write_phase_table_csv(const PhaseConfigTable& table, std::ostream& out) {
  out << kPhaseTableHeader << "\n";
  for (int p = 0; p < table.phases(); ++p)
    for (auto cfg : PrefetcherConfig::valid_set()) {
      const auto& c = table.cell(p, cfg);
      out << p << ',' << cfg.to_string() << ',' << c.sample_count << ','
          << fmt_double(c.mean_ipc) << "\n";
    }
}

inline void write_phase_table_csv(const PhaseConfigTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open for writing");
  write_phase_table_csv(table, out);
}

inline std::string training_set_header() {
  std::string h;
  for (auto name : kFeatureNames) {
    h += name;
    h += ',';
  }
  h += "phase_id,label";
  return h;
}

inline void write_training_set_csv(const TrainingSet& ts, std::ostream& out) {
  out << training_set_header() << "\n";
  for (const auto& row : ts.rows) {
    const auto a = row.x.to_array();
    for (double v : a) out << fmt_double(v) << ',';
    out << row.phase_id << ',' << row.label.to_string() << "\n";
  }
}

inline void write_training_set_csv(const TrainingSet& ts, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open for writing");
  write_training_set_csv(ts, out);
}

inline TrainingSet parse_training_set_csv(std::istream& in, const std::string& name) {
  TrainingSet ts;
  std::string linebuf;
  std::vector<std::string_view> fields;
  int line = 0;
  bool header_seen = false;
  while (std::getline(in, linebuf)) {
    ++line;
    std::string_view sv = detail::trim(linebuf);
    if (sv.empty() || sv.front() == '#') continue;
    if (!header_seen) {
      if (sv != training_set_header())
        throw ParseError(name + ":" + std::to_string(line) + ": malformed header row");
      header_seen = true;
      continue;
    }
    detail::split_csv(sv, fields);
    if (fields.size() != FeatureVector::kCount + 2)
      throw ParseError(name + ":" + std::to_string(line) + ": expected " +
                       std::to_string(FeatureVector::kCount + 2) + " fields");
    std::array<double, FeatureVector::kCount> a{};
    for (std::size_t i = 0; i < FeatureVector::kCount; ++i)
      a[i] = parse_double_field(fields[i], name, line);
    TrainingRow row;
    row.x = FeatureVector::from_array(a);
    row.phase_id = static_cast<int>(detail::parse_int_field<std::int64_t>(fields[7], name, line));
    auto cfg = PrefetcherConfig::parse(detail::trim(fields[8]));
    if (!cfg || !cfg->is_valid())
      throw ParseError(name + ":" + std::to_string(line) + ": bad label mask");
    row.label = *cfg;
    ts.rows.push_back(row);
  }
  if (!header_seen) throw ParseError(name + ": missing header row");
  return ts;
}

inline TrainingSet read_training_set_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  return parse_training_set_csv(in, path);
}

}  // namespace pfsel

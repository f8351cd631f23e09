#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "netperf/net_model.hpp"
#include "netperf/routenet.hpp"
#include "netperf/sample_io.hpp"
#include "netperf/simulator.hpp"

namespace netperf::report {

inline const std::vector<std::string> kMetrics{"delay", "jitter", "loss"};

struct BenchmarkOptions {
  /// Subset of {"sim", "qt", "gnn"}.
  std::vector<std::string> engines;
  /// Each model contributes the metric it was trained for.
  std::vector<gnn::Model> models;
  /// Re-simulation setup; the seed is taken from the sample meta when present.
  sim::SimOptions sim;
  double jitter_floor = 1e-9;  // s^2
  double loss_floor = 1e-4;
  int size_bucket_width = 10;  // nodes
  int threads = 1;
  Json provenance = Json::object();
};

struct ErrorRow {
  std::string engine;
  std::string metric;
  int flow_id = 0;
  double rel_error = 0.0;
  int sample_id = 0;
  int topo_size = 0;
  double wall_ms = 0.0;
};

struct SampleTiming {
  int sample_id = 0;
  int topo_size = 0;
  double max_utilization = 0.0;
  int load_bucket = 0;  // 0 low, 1 medium, 2 high
  std::map<std::string, double> wall_ms;
};

struct Report {
  Json header;
  std::vector<ErrorRow> rows;
  std::vector<SampleTiming> samples;
  /// engine/metric -> flows left out because the true value is 0 or the flow
  /// delivered nothing.
  std::map<std::string, int> zero_truth;
  std::map<std::string, int> unreliable;
  std::array<double, 2> load_cuts{};  // tercile boundaries of max utilization
  int size_bucket_width = 10;
};

/// |pred - true| / true with true replaced by the floor when smaller.
/// nullopt when the true value is 0.
std::optional<double> relative_error(double pred, double truth, double floor);

/// Runs the engines over a labeled dataset and collects per-flow relative
/// errors and per-sample inference times.
Report benchmark(const std::vector<NetworkSample>& dataset, const BenchmarkOptions& options);

struct Stats {
  int count = 0;
  double mean = 0.0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

Stats summarize(std::vector<double> values);

using Buckets = std::vector<std::pair<std::string, Stats>>;
/// engine -> metric -> buckets in display order.
using Table = std::map<std::string, std::map<std::string, Buckets>>;

Table overall_table(const Report& report);
Table load_table(const Report& report);
Table size_table(const Report& report);

/// Everything but the per-flow rows: header, tables, timing, exclusions.
Json summary_json(const Report& report);

void write_csv(const std::filesystem::path& path, const Report& report);
std::vector<ErrorRow> read_csv(const std::filesystem::path& path);

/// Maximum mean error per "engine/metric"; an empty map disables the gate.
using Thresholds = std::map<std::string, double>;

struct SummaryResult {
  std::string text;
  int exit_code = 0;
  std::vector<std::string> violations;
};

/// Human-readable tables from a summary document; exit_code 1 when a
/// threshold is exceeded or a gated pair is missing.
SummaryResult report_summary(const Json& summary, const Thresholds& thresholds);

Thresholds thresholds_from_json(const Json& j);

}  // namespace netperf::report

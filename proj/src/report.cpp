#include "netperf/report.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "netperf/qt_network.hpp"

namespace netperf::report {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

const char* const kLoadNames[3] = {"low", "medium", "high"};

std::string key(const std::string& engine, const std::string& metric) { return engine + "/" + metric; }

struct SampleResult {
  std::vector<ErrorRow> rows;
  std::map<std::string, double> wall_ms;
  std::map<std::string, int> zero_truth, unreliable;
};

void compare(const std::string& engine, const std::string& metric, const PerfLabels& pred,
             const PerfLabels& truth, double wall_ms, const BenchmarkOptions& opt, int sample_id,
             int topo_size, SampleResult& out) {
  if (pred.flows.size() != truth.flows.size()) {
    throw Error("benchmark: engine " + engine + " returned " + std::to_string(pred.flows.size()) +
                " flows, labels have " + std::to_string(truth.flows.size()));
  }
  const std::string k = key(engine, metric);
  for (std::size_t f = 0; f < truth.flows.size(); ++f) {
    const FlowLabel& t = truth.flows[f];
    const FlowLabel& p = pred.flows[f];
    double pv = 0.0, tv = 0.0, floor = 0.0;
    if (metric == "delay") {
      pv = p.mean_delay;
      tv = t.mean_delay;
    } else if (metric == "jitter") {
      pv = p.jitter;
      tv = t.jitter;
      floor = opt.jitter_floor;
    } else {
      pv = p.loss_ratio;
      tv = t.loss_ratio;
      floor = opt.loss_floor;
    }
    if (metric != "loss" && !t.reliable) {
      ++out.unreliable[k];
      continue;
    }
    const auto e = relative_error(pv, tv, floor);
    if (!e) {
      ++out.zero_truth[k];
      continue;
    }
    out.rows.push_back(ErrorRow{engine, metric, t.flow_id, *e, sample_id, topo_size, wall_ms});
  }
}

SampleResult run_sample(const NetworkSample& s, int id, const BenchmarkOptions& opt) {
  if (!s.labels) throw Error("benchmark: sample " + std::to_string(id) + " has no labels");
  SampleResult out;
  const int n = static_cast<int>(s.topology.nodes.size());
  for (const std::string& engine : opt.engines) {
    if (engine == "sim") {
      sim::SimOptions so = opt.sim;
      if (s.meta) so.seed = s.meta->seed;
      const auto t0 = Clock::now();
      const PerfLabels pred = sim::run(s, so).labels;
      const double ms = ms_since(t0);
      out.wall_ms[engine] = ms;
      for (const auto& m : kMetrics) compare(engine, m, pred, *s.labels, ms, opt, id, n, out);
    } else if (engine == "qt") {
      const auto t0 = Clock::now();
      const PerfLabels pred = qt::solve(s).labels;
      const double ms = ms_since(t0);
      out.wall_ms[engine] = ms;
      for (const auto& m : kMetrics) compare(engine, m, pred, *s.labels, ms, opt, id, n, out);
    } else if (engine == "gnn") {
      double total = 0.0;
      for (const gnn::Model& model : opt.models) {
        const auto t0 = Clock::now();
        const PerfLabels pred = gnn::infer(model, s).labels;
        const double ms = ms_since(t0);
        total += ms;
        compare(engine, gnn::to_string(model.target), pred, *s.labels, ms, opt, id, n, out);
      }
      out.wall_ms[engine] = total;
    }
  }
  return out;
}

Json stats_json(const Stats& s) {
  return Json{{"count", s.count}, {"mean", s.mean},     {"min", s.min}, {"q1", s.q1},
              {"median", s.median}, {"q3", s.q3}, {"max", s.max}};
}

Stats stats_from_json(const Json& j) {
  Stats s;
  s.count = j.at("count").get<int>();
  s.mean = j.at("mean").get<double>();
  s.min = j.at("min").get<double>();
  s.q1 = j.at("q1").get<double>();
  s.median = j.at("median").get<double>();
  s.q3 = j.at("q3").get<double>();
  s.max = j.at("max").get<double>();
  return s;
}

Json table_json(const Table& t) {
  Json out = Json::object();
  for (const auto& [engine, metrics] : t) {
    for (const auto& [metric, buckets] : metrics) {
      Json arr = Json::array();
      for (const auto& [label, st] : buckets) {
        Json b = stats_json(st);
        b["bucket"] = label;
        arr.push_back(b);
      }
      out[engine][metric] = arr;
    }
  }
  return out;
}

Table table_from_json(const Json& j) {
  Table t;
  for (const auto& [engine, metrics] : j.items()) {
    for (const auto& [metric, arr] : metrics.items()) {
      Buckets b;
      for (const auto& e : arr) b.emplace_back(e.at("bucket").get<std::string>(), stats_from_json(e));
      t[engine][metric] = b;
    }
  }
  return t;
}

template <typename BucketOf>
Table grouped(const Report& r, BucketOf bucket_of) {
  // engine -> metric -> ordered bucket key -> errors
  std::map<std::string, std::map<std::string, std::map<std::pair<int, std::string>, std::vector<double>>>> acc;
  for (const ErrorRow& row : r.rows) acc[row.engine][row.metric][bucket_of(row)].push_back(row.rel_error);
  Table t;
  for (auto& [engine, metrics] : acc) {
    for (auto& [metric, buckets] : metrics) {
      for (auto& [k, values] : buckets) t[engine][metric].emplace_back(k.second, summarize(std::move(values)));
    }
  }
  return t;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_table(std::ostringstream& os, const std::string& title, const Table& t) {
  os << title << "\n";
  for (const auto& [engine, metrics] : t) {
    for (const auto& [metric, buckets] : metrics) {
      os << "  " << engine << " " << metric << ":";
      for (const auto& [label, st] : buckets) {
        os << "  " << label << " " << fmt("%.4f", st.mean) << " (n=" << st.count << ")";
      }
      os << "\n";
    }
  }
}

}  // namespace

std::optional<double> relative_error(double pred, double truth, double floor) {
  if (truth == 0.0) return std::nullopt;
  return std::abs(pred - truth) / std::max(std::abs(truth), floor);
}

Report benchmark(const std::vector<NetworkSample>& dataset, const BenchmarkOptions& options) {
  if (options.engines.empty()) throw Error("benchmark: no engines given");
  for (const auto& e : options.engines) {
    if (e != "sim" && e != "qt" && e != "gnn") throw Error("benchmark: unknown engine '" + e + "'");
    if (e == "gnn" && options.models.empty()) throw Error("benchmark: engine gnn needs a model");
  }
  if (dataset.empty()) throw Error("benchmark: empty dataset");
  if (options.size_bucket_width < 1) throw Error("benchmark: size bucket width must be >= 1");

  const int n = static_cast<int>(dataset.size());
  std::vector<SampleResult> results(n);
  std::vector<std::string> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        results[i] = run_sample(dataset[i], i, options);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int threads = std::clamp(options.threads, 1, n);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }

  Report r;
  r.size_bucket_width = options.size_bucket_width;
  std::vector<double> utils;
  for (int i = 0; i < n; ++i) {
    SampleTiming st;
    st.sample_id = i;
    st.topo_size = static_cast<int>(dataset[i].topology.nodes.size());
    st.max_utilization = max_link_utilization(dataset[i]);
    st.wall_ms = results[i].wall_ms;
    utils.push_back(st.max_utilization);
    r.samples.push_back(st);
    r.rows.insert(r.rows.end(), results[i].rows.begin(), results[i].rows.end());
    for (const auto& [k, c] : results[i].zero_truth) r.zero_truth[k] += c;
    for (const auto& [k, c] : results[i].unreliable) r.unreliable[k] += c;
  }
  std::sort(utils.begin(), utils.end());
  r.load_cuts = {quantile(utils, 1.0 / 3.0), quantile(utils, 2.0 / 3.0)};
  for (auto& st : r.samples) {
    st.load_bucket = st.max_utilization <= r.load_cuts[0] ? 0 : st.max_utilization <= r.load_cuts[1] ? 1 : 2;
  }

  Json models = Json::array();
  for (const auto& m : options.models) {
    models.push_back(Json{{"target", gnn::to_string(m.target)},
                          {"d", m.hyper.d},
                          {"T", m.hyper.T},
                          {"l_max", m.hyper.l_max}});
  }
  r.header = Json{{"format", "netperf-report"},
                  {"version", 1},
                  {"engines", options.engines},
                  {"models", models},
                  {"samples", n},
                  {"jitter_floor", options.jitter_floor},
                  {"loss_floor", options.loss_floor},
                  {"sim_packets", options.sim.packet_budget ? Json(*options.sim.packet_budget) : Json()},
                  {"sim_sizes", options.sim.sizes == sim::PacketSizeModel::kFixed ? "fixed" : "exponential"},
                  {"provenance", options.provenance}};
  return r;
}

Stats summarize(std::vector<double> values) {
  Stats s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  return s;
}

Table overall_table(const Report& report) {
  return grouped(report, [](const ErrorRow&) { return std::pair<int, std::string>{0, "all"}; });
}

Table load_table(const Report& report) {
  std::vector<int> bucket(report.samples.size(), 0);
  for (const auto& s : report.samples) bucket.at(s.sample_id) = s.load_bucket;
  return grouped(report, [&](const ErrorRow& row) {
    const int b = bucket.at(row.sample_id);
    return std::pair<int, std::string>{b, kLoadNames[b]};
  });
}

Table size_table(const Report& report) {
  const int w = report.size_bucket_width;
  return grouped(report, [w](const ErrorRow& row) {
    const int lo = row.topo_size / w * w;
    return std::pair<int, std::string>{lo, std::to_string(lo) + "-" + std::to_string(lo + w - 1)};
  });
}

Json summary_json(const Report& report) {
  Json excluded = Json::object();
  for (const auto& [k, c] : report.zero_truth) excluded[k]["zero_truth"] = c;
  for (const auto& [k, c] : report.unreliable) excluded[k]["unreliable"] = c;

  std::map<std::string, std::vector<double>> per_engine;
  Json per_sample = Json::array();
  for (const auto& s : report.samples) {
    per_sample.push_back(Json{{"sample_id", s.sample_id},
                              {"topo_size", s.topo_size},
                              {"max_utilization", s.max_utilization},
                              {"load_bucket", kLoadNames[s.load_bucket]},
                              {"wall_ms", s.wall_ms}});
    for (const auto& [e, ms] : s.wall_ms) per_engine[e].push_back(ms);
  }
  Json timing = Json::object();
  for (auto& [e, v] : per_engine) timing[e] = stats_json(summarize(std::move(v)));

  return Json{{"header", report.header},
              {"rows", report.rows.size()},
              {"load_cuts", report.load_cuts},
              {"size_bucket_width", report.size_bucket_width},
              {"excluded", excluded},
              {"overall", table_json(overall_table(report))},
              {"load", table_json(load_table(report))},
              {"size", table_json(size_table(report))},
              {"timing", timing},
              {"samples", per_sample}};
}

void write_csv(const std::filesystem::path& path, const Report& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "engine,metric,flow_id,rel_error,sample_id,topo_size,wall_ms\n";
  char buf[64];
  for (const auto& r : report.rows) {
    out << r.engine << ',' << r.metric << ',' << r.flow_id << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.rel_error);
    out << buf << ',' << r.sample_id << ',' << r.topo_size << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.wall_ms);
    out << buf << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<ErrorRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "engine,metric,flow_id,rel_error,sample_id,topo_size,wall_ms") {
    throw Error(path.string() + ": unexpected CSV header");
  }
  std::vector<ErrorRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 7) throw Error(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    try {
      rows.push_back(ErrorRow{cells[0], cells[1], std::stoi(cells[2]), std::stod(cells[3]), std::stoi(cells[4]),
                              std::stoi(cells[5]), std::stod(cells[6])});
    } catch (const std::logic_error&) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}

Thresholds thresholds_from_json(const Json& j) {
  if (!j.is_object()) throw Error("thresholds must be an object of \"engine/metric\": max mean error");
  Thresholds t;
  for (const auto& [k, v] : j.items()) {
    if (k.find('/') == std::string::npos) throw Error("threshold key '" + k + "' is not engine/metric");
    t[k] = v.get<double>();
  }
  return t;
}

SummaryResult report_summary(const Json& summary, const Thresholds& thresholds) {
  if (!summary.contains("overall") || summary.at("overall").empty()) throw Error("report: empty report");
  const Table overall = table_from_json(summary.at("overall"));
  std::ostringstream os;
  os << "mean absolute relative error\n";
  for (const auto& [engine, metrics] : overall) {
    for (const auto& [metric, buckets] : metrics) {
      const Stats& st = buckets.front().second;
      os << "  " << engine << " " << metric << "  mean " << fmt("%.4f", st.mean) << "  median "
         << fmt("%.4f", st.median) << "  q3 " << fmt("%.4f", st.q3) << "  n=" << st.count << "\n";
    }
  }
  if (summary.contains("load")) {
    const auto& cuts = summary.at("load_cuts");
    print_table(os,
                "by load (max utilization cuts " + fmt("%.3f", cuts.at(0).get<double>()) + ", " +
                    fmt("%.3f", cuts.at(1).get<double>()) + ")",
                table_from_json(summary.at("load")));
  }
  if (summary.contains("size")) print_table(os, "by topology size", table_from_json(summary.at("size")));
  if (summary.contains("timing")) {
    os << "inference time per sample (ms)\n";
    for (const auto& [engine, st] : summary.at("timing").items()) {
      os << "  " << engine << "  mean " << fmt("%.3f", st.at("mean").get<double>()) << "  max "
         << fmt("%.3f", st.at("max").get<double>()) << "\n";
    }
  }

  SummaryResult out;
  for (const auto& [k, limit] : thresholds) {
    const auto slash = k.find('/');
    const std::string engine = k.substr(0, slash), metric = k.substr(slash + 1);
    const auto e = overall.find(engine);
    if (e == overall.end() || !e->second.contains(metric)) {
      out.violations.push_back(k + ": not in report");
      continue;
    }
    const double mean = e->second.at(metric).front().second.mean;
    if (!(mean <= limit)) out.violations.push_back(k + ": " + fmt("%.4f", mean) + " > " + fmt("%.4f", limit));
  }
  for (const auto& v : out.violations) os << "THRESHOLD " << v << "\n";
  out.exit_code = out.violations.empty() ? 0 : 1;
  out.text = os.str();
  return out;
}

}  // namespace netperf::report

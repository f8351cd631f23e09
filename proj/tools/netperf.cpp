#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "netperf/datagen.hpp"
#include "netperf/qt_engine.hpp"
#include "netperf/qt_network.hpp"
#include "netperf/report.hpp"
#include "netperf/routenet.hpp"
#include "netperf/sample_io.hpp"
#include "netperf/simulator.hpp"

using namespace netperf;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string log_level = "info";
};

sim::PacketSizeModel size_model(const std::string& name) {
  if (name == "exponential") return sim::PacketSizeModel::kExponential;
  if (name == "fixed") return sim::PacketSizeModel::kFixed;
  throw Error("unknown packet size model '" + name + "' (exponential, fixed)");
}

void write_text(const std::string& path, const Json& j) {
  if (path == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json_file(path, j);
  }
}

// ---- simulate ----

struct SimulateArgs {
  std::string sample, out = "-", sizes = "exponential";
  std::uint64_t packets = 1'000'000;
  std::optional<double> seconds;
  double warmup = 0.1;
  bool no_drain = false;
};

int simulate(const SimulateArgs& a, const Globals& g) {
  const NetworkSample s = read_sample(a.sample);
  sim::SimOptions opt;
  opt.seed = g.seed.value_or(s.meta ? s.meta->seed : 1);
  if (a.seconds) {
    opt.sim_seconds = *a.seconds;
  } else {
    opt.packet_budget = a.packets;
  }
  opt.warmup_fraction = a.warmup;
  opt.sizes = size_model(a.sizes);
  opt.drain = !a.no_drain;
  spdlog::info("simulating {} flows, seed {}", s.flows.size(), opt.seed);
  const auto res = sim::run(s, opt);
  spdlog::info("{} events, window [{:.4f}, {:.4f}] s", res.events, res.window_start, res.window_end);
  write_text(a.out, to_json(res.labels));
  return 0;
}

// ---- qt-eval ----

struct QtEvalArgs {
  std::string sample, out = "-";
  double tol = 1e-6;
  int max_iter = 50;
  bool damping = false;
};

int qt_eval(const QtEvalArgs& a, const Globals&) {
  const NetworkSample s = read_sample(a.sample);
  qt::NetworkOptions opt;
  opt.tolerance = a.tol;
  opt.max_iterations = a.max_iter;
  opt.damping = a.damping;
  const auto res = qt::solve(s, opt);
  if (!res.state.converged) {
    spdlog::warn("fixed point did not converge: residual {:.3g} after {} iterations", res.state.residual,
                 res.state.iterations);
  } else {
    spdlog::info("converged in {} iterations, residual {:.3g}", res.state.iterations, res.state.residual);
  }
  Json out = to_json(res.labels);
  out["solver"] = Json{{"converged", res.state.converged},
                       {"iterations", res.state.iterations},
                       {"residual", res.state.residual},
                       {"residual_history", res.state.residual_history}};
  write_text(a.out, out);
  return 0;
}

// ---- qt-port ----

struct QtPortArgs {
  std::string policy = "fifo", out = "-", dump;
  std::vector<double> lambda, mu, weights;
  std::vector<int> b;
};

int qt_port(const QtPortArgs& a, const Globals&) {
  const Policy policy = policy_from_string(a.policy);
  const std::size_t p = a.lambda.size();
  if (p == 0) throw Error("--lambda needs at least one rate");
  if (a.mu.size() != p || a.b.size() != p) throw Error("--lambda, --mu and --b need the same length");
  if (policy == Policy::kFifo && p != 1) throw Error("fifo ports have one class");
  std::vector<double> w = a.weights.empty() ? std::vector<double>(p, 1.0) : a.weights;
  if (w.size() != p) throw Error("--weights needs one entry per class");

  const auto m = qt::port_metrics(policy, a.lambda, a.mu, a.b, w);
  write_text(a.out, Json{{"policy", std::string(to_string(policy))},
                         {"blocking", m.blocking},
                         {"delay", m.delay},
                         {"delay_var", m.delay_var},
                         {"mean_queue", m.mean_queue}});

  if (!a.dump.empty()) {
    const qt::CtmcModel model = (policy == Policy::kWfq || policy == Policy::kDrr)
                                    ? qt::build_gps_generator(a.lambda, a.mu, w, a.b)
                                    : qt::build_sp_generator(a.lambda, a.mu, a.b);
    std::ofstream out(a.dump);
    if (!out) throw Error("cannot write " + a.dump);
    const auto& Q = model.generator();
    char buf[96];
    for (int r = 0; r < Q.outerSize(); ++r) {
      for (qt::SparseMatrix::InnerIterator it(Q, r); it; ++it) {
        std::snprintf(buf, sizeof buf, "%d %d %.17g\n", r, static_cast<int>(it.col()), it.value());
        out << buf;
      }
    }
    spdlog::info("generator: {} states, {} nonzeros -> {}", model.size(), Q.nonZeros(), a.dump);
  }
  return 0;
}

// ---- datagen ----

struct DatagenArgs {
  std::string config, out, manifest, sizes = "exponential";
  int count = 100;
  std::uint64_t packets = 100'000;
  double warmup = 0.1;
};

int datagen_cmd(const DatagenArgs& a, const Globals& g) {
  datagen::GenConfig cfg = a.config.empty() ? datagen::GenConfig{} : datagen::config_from_json(read_json_file(a.config));
  if (g.seed) cfg.seed = *g.seed;
  sim::SimOptions opt;
  opt.packet_budget = a.packets;
  opt.warmup_fraction = a.warmup;
  opt.sizes = size_model(a.sizes);
  spdlog::info("generating {} samples, seed {}", a.count, cfg.seed);
  const auto ds = datagen::build_dataset(cfg, a.count, opt);
  write_dataset(a.out, ds.samples);
  if (!a.manifest.empty()) write_json_file(a.manifest, ds.manifest);
  const int failed = a.count - static_cast<int>(ds.samples.size());
  if (failed > 0) spdlog::warn("{} samples failed, see the manifest", failed);
  spdlog::info("wrote {} samples to {}", ds.samples.size(), a.out);
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string dataset, target = "delay", out, curve, validation;
  int epochs = 200, batch = 8, d = 32, T = 8, l_max = 32;
  double lr = 1e-3, lr_decay = 1.0, val_fraction = 0.1;
};

int train_cmd(const TrainArgs& a, const Globals& g) {
  const std::uint64_t seed = g.seed.value_or(7);
  const auto data = read_dataset(a.dataset);
  if (data.empty()) throw Error("empty dataset " + a.dataset);
  std::vector<NetworkSample> train_set, val_set;
  if (!a.validation.empty()) {
    train_set = data;
    val_set = read_dataset(a.validation);
  } else if (a.val_fraction > 0.0) {
    std::tie(train_set, val_set) = datagen::split_by_topology(data, a.val_fraction, seed);
  } else {
    train_set = data;
  }
  if (train_set.empty()) throw Error("no training samples left after the validation split");
  gnn::Hyper hyper{a.d, a.T, a.l_max};
  const gnn::Model m0 = gnn::Model::create(train_set, hyper, gnn::target_from_string(a.target), seed);
  gnn::TrainOptions opt;
  opt.lr = a.lr;
  opt.lr_decay = a.lr_decay;
  opt.epochs = a.epochs;
  opt.batch_size = a.batch;
  opt.seed = seed;
  opt.on_epoch = [](int e, double tr, double va) { spdlog::debug("epoch {} train {:.6g} val {:.6g}", e, tr, va); };
  spdlog::info("training on {} samples ({} validation), target {}", train_set.size(), val_set.size(), a.target);
  const auto res = gnn::train(m0, train_set, val_set, opt);
  const auto& best = res.curve.at(res.best_epoch - 1);
  spdlog::info("best epoch {}: train {:.6g} validation {:.6g}", res.best_epoch, best.train, best.validation);
  gnn::save_model(a.out, res.model);
  if (!a.curve.empty()) {
    std::ofstream out(a.curve);
    if (!out) throw Error("cannot write " + a.curve);
    out << "epoch,train,validation\n";
    for (const auto& e : res.curve) out << e.epoch << ',' << e.train << ',' << e.validation << '\n';
  }
  return 0;
}

// ---- infer ----

struct InferArgs {
  std::string model, sample, out = "-";
};

int infer_cmd(const InferArgs& a, const Globals&) {
  const gnn::Model m = gnn::load_model(a.model);
  const NetworkSample s = read_sample(a.sample);
  const auto res = gnn::infer(m, s);
  spdlog::info("inference {:.3f} ms", res.wall_ms);
  Json out = to_json(res.labels);
  out["target"] = gnn::to_string(m.target);
  out["wall_ms"] = res.wall_ms;
  write_text(a.out, out);
  return 0;
}

// ---- benchmark ----

struct BenchmarkArgs {
  std::string dataset, csv, out = "-", sizes = "exponential";
  std::vector<std::string> engines, models;
  std::uint64_t packets = 100'000;
  int bucket_width = 10;
  double jitter_floor = 1e-9, loss_floor = 1e-4;
};

int benchmark_cmd(const BenchmarkArgs& a, const Globals& g) {
  const auto data = read_dataset(a.dataset);
  report::BenchmarkOptions opt;
  opt.engines = a.engines;
  for (const auto& path : a.models) opt.models.push_back(gnn::load_model(path));
  opt.sim.packet_budget = a.packets;
  opt.sim.sizes = size_model(a.sizes);
  opt.jitter_floor = a.jitter_floor;
  opt.loss_floor = a.loss_floor;
  opt.size_bucket_width = a.bucket_width;
  opt.threads = g.threads;
  opt.provenance = Json{{"dataset", a.dataset}, {"models", a.models}};
  if (g.seed) opt.provenance["seed"] = *g.seed;
  spdlog::info("benchmarking {} samples", data.size());
  const auto r = report::benchmark(data, opt);
  if (!a.csv.empty()) report::write_csv(a.csv, r);
  write_text(a.out, report::summary_json(r));
  return 0;
}

// ---- report ----

struct ReportArgs {
  std::string summary, thresholds;
};

int report_cmd(const ReportArgs& a, const Globals&) {
  const Json summary = read_json_file(a.summary);
  report::Thresholds t;
  if (!a.thresholds.empty()) t = report::thresholds_from_json(read_json_file(a.thresholds));
  const auto res = report::report_summary(summary, t);
  std::cout << res.text;
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network performance estimation: simulator, queueing model and graph network"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads for benchmark")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  std::function<int()> action;

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Packet-level simulation of one sample");
  sim_cmd->add_option("--sample", sa.sample, "Sample JSON")->required();
  sim_cmd->add_option("--packets", sa.packets, "Packets to generate");
  sim_cmd->add_option("--seconds", sa.seconds, "Simulated horizon instead of a packet budget");
  sim_cmd->add_option("--warmup", sa.warmup, "Fraction discarded as warmup");
  sim_cmd->add_option("--sizes", sa.sizes, "Packet sizes: exponential or fixed");
  sim_cmd->add_flag("--no-drain", sa.no_drain, "Stop at the last arrival");
  sim_cmd->add_option("--out", sa.out, "Labels JSON (- for stdout)");
  sim_cmd->callback([&] { action = [&] { return simulate(sa, g); }; });

  QtEvalArgs qa;
  auto* qe_cmd = app.add_subcommand("qt-eval", "Queueing-theory estimate of one sample");
  qe_cmd->add_option("--sample", qa.sample, "Sample JSON")->required();
  qe_cmd->add_option("--tol", qa.tol, "Fixed point tolerance");
  qe_cmd->add_option("--max-iter", qa.max_iter, "Iteration cap");
  qe_cmd->add_flag("--damping", qa.damping, "Halve updates when the residual grows");
  qe_cmd->add_option("--out", qa.out, "Labels JSON (- for stdout)");
  qe_cmd->callback([&] { action = [&] { return qt_eval(qa, g); }; });

  QtPortArgs pa;
  auto* qp_cmd = app.add_subcommand("qt-port", "Metrics of a single scheduled port");
  qp_cmd->add_option("--policy", pa.policy, "fifo, sp, wfq or drr");
  qp_cmd->add_option("--lambda", pa.lambda, "Arrival rates per class")->delimiter(',')->required();
  qp_cmd->add_option("--mu", pa.mu, "Service rates per class")->delimiter(',')->required();
  qp_cmd->add_option("--b", pa.b, "Buffer sizes per class")->delimiter(',')->required();
  qp_cmd->add_option("--weights", pa.weights, "Class weights (wfq, drr)")->delimiter(',');
  qp_cmd->add_option("--out", pa.out, "Metrics JSON (- for stdout)");
  qp_cmd->add_option("--dump-generator", pa.dump, "Write the generator as 'row col value' lines");
  qp_cmd->callback([&] { action = [&] { return qt_port(pa, g); }; });

  DatagenArgs da;
  auto* dg_cmd = app.add_subcommand("datagen", "Generate and label a dataset");
  dg_cmd->add_option("--config", da.config, "Generator config JSON");
  dg_cmd->add_option("--count", da.count, "Number of samples")->check(CLI::NonNegativeNumber);
  dg_cmd->add_option("--out", da.out, "Dataset NDJSON")->required();
  dg_cmd->add_option("--manifest", da.manifest, "Manifest JSON");
  dg_cmd->add_option("--packets", da.packets, "Simulated packets per sample");
  dg_cmd->add_option("--warmup", da.warmup, "Warmup fraction");
  dg_cmd->add_option("--sizes", da.sizes, "Packet sizes: exponential or fixed");
  dg_cmd->callback([&] { action = [&] { return datagen_cmd(da, g); }; });

  TrainArgs ta;
  auto* tr_cmd = app.add_subcommand("train", "Train the graph model");
  tr_cmd->add_option("--dataset", ta.dataset, "Training NDJSON")->required();
  tr_cmd->add_option("--validation", ta.validation, "Validation NDJSON (default: topology split)");
  tr_cmd->add_option("--val-fraction", ta.val_fraction, "Share of topologies held out");
  tr_cmd->add_option("--target", ta.target, "delay, jitter or loss");
  tr_cmd->add_option("--epochs", ta.epochs, "Epochs")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--batch", ta.batch, "Samples per step")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--lr", ta.lr, "Adam learning rate");
  tr_cmd->add_option("--lr-decay", ta.lr_decay, "Per-epoch learning rate factor");
  tr_cmd->add_option("--dim", ta.d, "State size");
  tr_cmd->add_option("--iterations", ta.T, "Message passing rounds");
  tr_cmd->add_option("--l-max", ta.l_max, "Gradient segment length along paths");
  tr_cmd->add_option("--out", ta.out, "Model checkpoint")->required();
  tr_cmd->add_option("--curve", ta.curve, "Learning curve CSV");
  tr_cmd->callback([&] { action = [&] { return train_cmd(ta, g); }; });

  InferArgs ia;
  auto* in_cmd = app.add_subcommand("infer", "Predict one sample with a trained model");
  in_cmd->add_option("--model", ia.model, "Model checkpoint")->required();
  in_cmd->add_option("--sample", ia.sample, "Sample JSON")->required();
  in_cmd->add_option("--out", ia.out, "Labels JSON (- for stdout)");
  in_cmd->callback([&] { action = [&] { return infer_cmd(ia, g); }; });

  BenchmarkArgs ba;
  auto* bm_cmd = app.add_subcommand("benchmark", "Per-flow relative errors of engines against labels");
  bm_cmd->add_option("--dataset", ba.dataset, "Labeled NDJSON")->required();
  bm_cmd->add_option("--engines", ba.engines, "sim, qt, gnn")->delimiter(',')->required();
  bm_cmd->add_option("--model", ba.models, "Checkpoint for gnn (repeatable, one per target)");
  bm_cmd->add_option("--packets", ba.packets, "Packets for the sim engine");
  bm_cmd->add_option("--sizes", ba.sizes, "Packet sizes for the sim engine");
  bm_cmd->add_option("--bucket-width", ba.bucket_width, "Topology size bucket width")->check(CLI::PositiveNumber);
  bm_cmd->add_option("--jitter-floor", ba.jitter_floor, "Jitter error floor, s^2");
  bm_cmd->add_option("--loss-floor", ba.loss_floor, "Loss error floor");
  bm_cmd->add_option("--csv", ba.csv, "Per-flow error CSV");
  bm_cmd->add_option("--out", ba.out, "Summary JSON (- for stdout)");
  bm_cmd->callback([&] { action = [&] { return benchmark_cmd(ba, g); }; });

  ReportArgs ra;
  auto* rp_cmd = app.add_subcommand("report", "Print a benchmark summary and apply thresholds");
  rp_cmd->add_option("--report", ra.summary, "Summary JSON from benchmark")->required();
  rp_cmd->add_option("--thresholds", ra.thresholds, "JSON {\"engine/metric\": max mean error}");
  rp_cmd->callback([&] { action = [&] { return report_cmd(ra, g); }; });

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("netperf"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  try {
    return action ? action() : 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

// One PASS/FAIL line per acceptance criterion. Tolerances are fixed below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gnn_fixtures.hpp"
#include "netperf/datagen.hpp"
#include "netperf/qt_engine.hpp"
#include "netperf/qt_network.hpp"
#include "netperf/report.hpp"
#include "netperf/routenet.hpp"
#include "netperf/simulator.hpp"
#include "netperf/traffic.hpp"
#include "oracles.hpp"

using namespace netperf;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> notes;  // printed under the verdict line

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("violated: " + what);
    }
  }
};

// ---------------------------------------------------------------------------
// 1. single queue simulation against the closed form

constexpr double kC1Tol = 0.03;
constexpr double kC1Seconds = 120.0;
constexpr std::uint64_t kC1Packets = 1'000'000;
constexpr std::uint64_t kC1LossPackets = 10'000'000;
constexpr double kLossFloor = 1e-4;  // same guard as the benchmark report

Outcome criterion1() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::uint64_t seed = 10;
  for (const int b : {16, 32}) {
    for (const double rho : {0.3, 0.7, 0.95}) {
      const auto s = fixture::single_link(1e6, rho * 1000.0, b);
      const auto ref = qt::mm1b_metrics(rho * 1000.0, 1000.0, b);
      sim::SimOptions opt;
      opt.seed = ++seed;
      opt.packet_budget = kC1Packets;
      const auto r = sim::run(s, opt).labels;
      // Blocking near 1e-3 sees about 1000 drops at 10^6 packets, a sampling
      // error of roughly 5%; the loss check uses a run ten times longer.
      opt.packet_budget = kC1LossPackets;
      const auto rl = sim::run(s, opt).labels;
      const double ed = *report::relative_error(r.flows[0].mean_delay, ref.delay[0], 0.0);
      const double eo = *report::relative_error(r.queues[0].mean_occupancy, ref.mean_queue[0] / b, 0.0);
      auto loss_err = [&](const PerfLabels& x) {
        return std::abs(x.flows[0].loss_ratio - ref.blocking[0]) / std::max(ref.blocking[0], kLossFloor);
      };
      const double el = loss_err(rl);
      o.notes.push_back(fmt("rho %.2f b %2d: delay %.4f occupancy %.4f | loss %.4f at 10^7 (%.4f at 10^6), p_b %.3g",
                            rho, b, ed, eo, el, loss_err(r), ref.blocking[0]));
      worst = std::max({worst, ed, el, eo});
    }
  }
  const double secs = seconds_since(t0);
  o.require(worst <= kC1Tol, fmt("worst relative error %.4f > %.2f", worst, kC1Tol));
  o.require(secs < kC1Seconds, fmt("runtime %.1f s", secs));
  o.detail = fmt("worst relative error %.4f (tol %.2f), %.1f s", worst, kC1Tol, secs);
  return o;
}

// ---------------------------------------------------------------------------
// 2. CTMC validity

Outcome criterion2() {
  Outcome o;
  Rng rng(2024);
  double row = 0.0, resid = 0.0, pi_err = 0.0, red = 0.0;
  int configs = 0;
  for (int i = 0; i < 100; ++i) {
    const int p = static_cast<int>(rng.uniform_int(1, 3));
    std::vector<double> l, mu, w;
    std::vector<int> b;
    for (int c = 0; c < p; ++c) {
      l.push_back(rng.uniform(0.1, 3.0));
      mu.push_back(rng.uniform(0.5, 3.0));
      w.push_back(rng.uniform(1.0, 5.0));
      b.push_back(static_cast<int>(rng.uniform_int(1, 8)));
    }
    const bool sp = i % 2 == 0;
    const auto m = sp ? qt::build_sp_generator(l, mu, b) : qt::build_gps_generator(l, mu, w, b);
    ++configs;
    row = std::max(row, qt::audit_generator(m).max_abs_row_sum);
    const auto st = qt::stationary_distribution(m);
    resid = std::max(resid, st.raw_residual);
    const Eigen::VectorXd ref = oracle::reachable_null_space_stationary(oracle::dense(m.generator()));
    pi_err = std::max(pi_err, (st.pi - ref).cwiseAbs().maxCoeff());
    if (p == 1) {
      const auto mm = qt::mm1b_metrics(l[0], mu[0], b[0]);
      const auto pb = qt::blocking_probabilities(m, st.pi);
      const auto eq = qt::mean_queue_lengths(m, st.pi);
      const auto d = qt::first_passage_delay_moments(m, st.pi, 0);
      red = std::max({red, std::abs(pb[0] - mm.blocking[0]), std::abs(eq[0] - mm.mean_queue[0]),
                      std::abs(d.mean - mm.delay[0]), std::abs(d.var - mm.delay_var[0])});
    }
  }
  o.require(row <= 1e-12, fmt("row sum %.3g", row));
  o.require(resid <= 1e-10, fmt("residual %.3g", resid));
  o.require(pi_err <= 1e-10, fmt("pi vs dense null space %.3g", pi_err));
  o.require(red <= 1e-9, fmt("single-class reduction %.3g", red));
  o.detail = fmt("%d configs: max |row sum| %.2g, residual %.2g, pi diff %.2g, mm1b diff %.2g", configs, row, resid,
                 pi_err, red);
  return o;
}

// ---------------------------------------------------------------------------
// 3. scheduler chains against simulation

constexpr double kC3Tol = 0.05;

Outcome criterion3() {
  Outcome o;
  Rng rng(33);
  double worst_pb = 0.0, worst_w = 0.0, wfq_drr = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int p = static_cast<int>(rng.uniform_int(2, 3));
    const Policy policy = i % 2 == 0 ? Policy::kSp : Policy::kWfq;
    const double load = rng.uniform(0.9, 1.3);
    std::vector<double> share, w;
    std::vector<int> b;
    double total = 0.0;
    for (int c = 0; c < p; ++c) {
      share.push_back(rng.uniform(0.5, 1.5));
      total += share.back();
      w.push_back(rng.uniform(1.0, 4.0));
      b.push_back(static_cast<int>(rng.uniform_int(2, 6)));
    }
    NetworkSample s;
    s.topology.nodes = {0, 1};
    s.topology.links = {Link{0, 0, 1, 1e6, 1.0}};
    s.ports = {fixture::multi_port(0, policy, b, w)};
    std::vector<double> lambda, mu(p, 1000.0);
    for (int c = 0; c < p; ++c) {
      lambda.push_back(1000.0 * load * share[c] / total);
      s.flows.push_back(Flow{c, 0, 1, {Hop{{0, c}, 0}}, TrafficDescriptor::poisson(lambda.back()), 1000.0});
    }
    sim::SimOptions opt;
    opt.seed = 300 + i;
    opt.packet_budget = 1'000'000;
    const auto sim_l = sim::run(s, opt).labels;
    const auto qt_l = qt::solve(s).labels;
    std::string line = fmt("%s p=%d load %.2f:", policy == Policy::kSp ? "SP " : "WFQ", p, load);
    for (int c = 0; c < p; ++c) {
      const double epb = std::abs(sim_l.flows[c].loss_ratio - qt_l.flows[c].loss_ratio) /
                         std::max(qt_l.flows[c].loss_ratio, kLossFloor);
      const double ew = *report::relative_error(sim_l.flows[c].mean_delay, qt_l.flows[c].mean_delay, 0.0);
      worst_pb = std::max(worst_pb, epb);
      worst_w = std::max(worst_w, ew);
      line += fmt(" [p_b %.4f err %.3f, W err %.3f]", qt_l.flows[c].loss_ratio, epb, ew);
    }
    o.notes.push_back(line);
    const auto a = qt::port_metrics(Policy::kWfq, lambda, mu, b, w);
    const auto d = qt::port_metrics(Policy::kDrr, lambda, mu, b, w);
    for (int c = 0; c < p; ++c) {
      wfq_drr = std::max({wfq_drr, std::abs(a.blocking[c] - d.blocking[c]), std::abs(a.delay[c] - d.delay[c]),
                          std::abs(a.delay_var[c] - d.delay_var[c]), std::abs(a.mean_queue[c] - d.mean_queue[c])});
    }
  }
  o.require(worst_pb <= kC3Tol, fmt("p_b error %.4f", worst_pb));
  o.require(worst_w <= kC3Tol, fmt("delay error %.4f", worst_w));
  o.require(wfq_drr == 0.0, fmt("WFQ and DRR differ by %.3g", wfq_drr));
  o.detail = fmt("20 ports: worst p_b error %.4f, worst W error %.4f (tol %.2f), WFQ/DRR max diff %.1g", worst_pb,
                 worst_w, kC3Tol, wfq_drr);
  return o;
}

// ---------------------------------------------------------------------------
// 4. network fixed point

Outcome criterion4() {
  Outcome o;
  datagen::GenConfig cfg;
  cfg.seed = 404;
  cfg.min_nodes = 6;
  cfg.max_nodes = 12;
  cfg.buffer_sizes = {8, 16};
  int worst_it = 0, lossless_ok = 0, lossless = 0, converged = 0;
  double worst_res = 0.0, worst_id = 0.0;
  for (int i = 0; i < 50; ++i) {
    NetworkSample s = datagen::generate_sample(cfg, derive_seed(cfg.seed, i));
    const bool low = i % 5 == 0;
    if (low) datagen::scale_rates(s, 0.01);
    const auto r = qt::solve(s);
    if (r.state.converged && r.state.residual < 1e-6 && r.state.iterations <= 50) ++converged;
    worst_it = std::max(worst_it, r.state.iterations);
    worst_res = std::max(worst_res, r.state.residual);
    if (low) {
      ++lossless;
      if (r.state.iterations == 1) ++lossless_ok;
    }
    const SampleIndex idx(s);
    for (int f = 0; f < idx.num_flows(); ++f) {
      double keep = 1.0;
      for (const auto& h : idx.flow_path(f)) keep *= 1.0 - r.state.ports[h.link].blocking[h.cls];
      worst_id = std::max(worst_id, std::abs(r.labels.flows[f].loss_ratio - (1.0 - keep)));
    }
  }
  o.require(converged == 50, fmt("%d of 50 converged", converged));
  o.require(lossless_ok == lossless, fmt("%d of %d lossless samples took one update", lossless_ok, lossless));
  o.require(worst_id <= 1e-9, fmt("loss identity %.3g", worst_id));
  o.detail = fmt("50 samples converged %d, max iterations %d, max residual %.2g; lossless one-update %d/%d; "
                 "loss identity max diff %.2g",
                 converged, worst_it, worst_res, lossless_ok, lossless, worst_id);
  return o;
}

// ---------------------------------------------------------------------------
// 5. sojourn variance

Outcome criterion5() {
  Outcome o;
  double worst = 0.0;
  for (const int b : {16, 32}) {
    for (const double rho : {0.3, 0.7, 0.95}) {
      const double mu = 1000.0, lambda = rho * mu;
      // Erlang mixture: an admitted arrival that finds n waits n + 1 services.
      std::vector<double> pi(b + 1);
      double z = 0.0;
      for (int n = 0; n <= b; ++n) z += pi[n] = std::pow(rho, n);
      double m1 = 0.0, m2 = 0.0;
      const double admit = 1.0 - pi[b] / z;
      for (int n = 0; n < b; ++n) {
        const double wn = pi[n] / z / admit;
        m1 += wn * (n + 1) / mu;
        m2 += wn * (n + 1) * (n + 2) / (mu * mu);
      }
      const double var = m2 - m1 * m1;
      const auto m = qt::build_sp_generator({lambda}, {mu}, {b});
      const auto d = qt::first_passage_delay_moments(m, qt::stationary_distribution(m).pi, 0);
      const double e = std::abs(d.var - var) / var;
      o.notes.push_back(fmt("rho %.2f b %d: Var %.6e closed form %.6e rel diff %.2e", rho, b, d.var, var, e));
      worst = std::max(worst, e);
      o.require(d.var >= 0.0, "negative variance");
    }
  }
  // nonnegativity on random multi-class ports
  Rng rng(55);
  double min_var = 1.0;
  for (int i = 0; i < 40; ++i) {
    const int p = static_cast<int>(rng.uniform_int(2, 3));
    std::vector<double> l, mu, w;
    std::vector<int> b;
    for (int c = 0; c < p; ++c) {
      l.push_back(rng.uniform(0.2, 3.0));
      mu.push_back(rng.uniform(1.0, 3.0));
      w.push_back(rng.uniform(1.0, 4.0));
      b.push_back(static_cast<int>(rng.uniform_int(1, 8)));
    }
    const auto m = i % 2 ? qt::build_sp_generator(l, mu, b) : qt::build_gps_generator(l, mu, w, b);
    const auto pi = qt::stationary_distribution(m).pi;
    for (int c = 0; c < p; ++c) min_var = std::min(min_var, qt::first_passage_delay_moments(m, pi, c).var);
  }
  o.require(worst <= 1e-9, fmt("variance rel diff %.3g", worst));
  o.require(min_var >= 0.0, fmt("min variance %.3g", min_var));
  o.detail = fmt("worst relative diff %.2e (tol 1e-9); min Var over 40 multi-class ports %.3g", worst, min_var);
  return o;
}

// ---------------------------------------------------------------------------
// 6. traffic generators

std::vector<double> draws(const TrafficDescriptor& d, std::size_t n, std::uint64_t seed) {
  auto st = make_traffic_state(d, seed);
  std::vector<double> x(n);
  for (auto& v : x) v = next_interarrival(d, st);
  return x;
}

Outcome criterion6() {
  Outcome o;
  double min_p = 1.0;
  std::vector<double> lag1;
  for (const double a : {0.0, 0.5, 0.9}) {
    const auto d = TrafficDescriptor::autocorr_exp(50.0, a, 3.0);
    const auto x = draws(d, 1'000'000, 61);
    lag1.push_back(empirical_stats(x, 1).autocorr[0]);
    // KS assumes independent draws: thin the correlated stream.
    const std::size_t stride = a > 0.0 ? 100 : 1;
    std::vector<double> thin;
    for (std::size_t i = 0; i < x.size() && thin.size() < 10'000; i += stride) thin.push_back(x[i]);
    const double p = oracle::ks_p_value(oracle::ks_statistic_exp(thin, 50.0), thin.size());
    o.notes.push_back(fmt("a %.1f: KS p-value %.3f on %zu draws, lag-1 autocorrelation %.4f", a, p, thin.size(),
                          lag1.back()));
    min_p = std::min(min_p, p);
  }
  const bool monotone = lag1[0] < lag1[1] && lag1[1] < lag1[2];

  // On-Off with the dataset periods; the 5-15 s periods are only reported
  const std::vector<TrafficDescriptor> models{
      TrafficDescriptor::poisson(300.0), TrafficDescriptor::cbr(300.0),
      TrafficDescriptor::on_off_model(300.0, datagen::GenConfig{}.on_off),
      TrafficDescriptor::autocorr_exp(300.0, 0.9, 12.0), TrafficDescriptor::modulated_exp(300.0, 0.9, 0.19)};
  double worst_rate = 0.0;
  for (const auto& d : models) {
    const double r = empirical_stats(draws(d, 1'000'000, 62)).mean_rate;
    const double e = std::abs(r - d.rate) / d.rate;
    o.notes.push_back(fmt("%s: rate %.2f of %.0f (%.4f)", std::string(to_string(d.model)).c_str(), r, d.rate, e));
    worst_rate = std::max(worst_rate, e);
  }
  {
    const auto d = TrafficDescriptor::on_off_model(300.0);
    const double r = empirical_stats(draws(d, 1'000'000, 62)).mean_rate;
    o.notes.push_back(fmt("OnOff with 5-15 s periods (not asserted, about 170 periods): rate %.2f (%.4f)", r,
                          std::abs(r - 300.0) / 300.0));
  }
  o.require(min_p > 0.01, fmt("KS p-value %.4f", min_p));
  o.require(monotone, "lag-1 autocorrelation not monotone");
  o.require(worst_rate <= 0.02, fmt("rate error %.4f", worst_rate));
  o.detail = fmt("min KS p %.3f (> 0.01), lag-1 %.3f < %.3f < %.3f, worst rate error %.4f (tol 0.02)", min_p,
                 lag1[0], lag1[1], lag1[2], worst_rate);
  return o;
}

// ---------------------------------------------------------------------------
// 7. graph model correctness and toy training

constexpr double kC7GradTol = 1e-4;
constexpr double kC7InvTol = 1e-6;
constexpr double kC7Reduction = 10.0;
constexpr double kC7Seconds = 900.0;

double worst_gradient_error(gnn::Target target, std::uint64_t seed, double step) {
  const auto s = fixture::three_flow_sample();
  const std::vector<const NetworkSample*> batch{&s};
  gnn::Model m = gnn::Model::create({s}, gnn::Hyper{}, target, 3);
  Rng rng(seed);
  for (auto& v : m.params.values()) v += rng.uniform(-0.05, 0.05);
  const auto g = gnn::grad(m, batch);
  auto f = [&] { return gnn::objective(m, batch); };
  double worst = 0.0;
  for (const auto& blk : m.params.blocks()) {
    const bool rq = blk.name.rfind("rq.", 0) == 0, rf = blk.name.rfind("rf.", 0) == 0;
    const bool unused = target == gnn::Target::kLoss ? rq : rf;
    std::vector<std::size_t> coords;
    for (std::size_t k = 0; k < blk.size(); ++k) coords.push_back(blk.offset + k);
    std::vector<double> an;
    for (const auto i : coords) an.push_back(g.values[i]);
    const auto fd = oracle::central_difference(f, m.params.values(), coords, step);
    if (unused) {
      for (std::size_t k = 0; k < an.size(); ++k) worst = std::max({worst, std::abs(an[k]), std::abs(fd[k])});
      continue;
    }
    worst = std::max(worst, fixture::block_error(fd, an));
  }
  return worst;
}

double mean_delay_mse(const gnn::Model& m, const std::vector<NetworkSample>& data) {
  double s = 0.0;
  for (const auto& x : data) s += gnn::loss_mse(gnn::infer(m, x).labels, *x.labels, gnn::Target::kDelay);
  return s / static_cast<double>(data.size());
}

Outcome criterion7() {
  Outcome o;
  const auto t0 = Clock::now();

  double grad_err = 0.0;
  for (const auto target : {gnn::Target::kDelay, gnn::Target::kJitter, gnn::Target::kLoss}) {
    const double e = worst_gradient_error(target, 78, 1e-5);
    o.notes.push_back(fmt("gradient %s: worst block relative error %.2e", gnn::to_string(target).c_str(), e));
    grad_err = std::max(grad_err, e);
  }

  datagen::GenConfig cfg;
  cfg.min_nodes = 10;
  cfg.max_nodes = 10;
  const auto s = datagen::generate_sample(cfg, 41);
  const auto m = gnn::Model::create({s}, gnn::Hyper{}, gnn::Target::kDelay, 3);
  const auto base = gnn::infer(m, s).labels;
  const auto perm = gnn::infer(m, fixture::relabeled(s)).labels;
  std::map<FlowId, FlowLabel> by_flow;
  for (const auto& f : perm.flows) by_flow[1000 - f.flow_id] = f;
  double inv = 0.0;
  for (const auto& f : base.flows) {
    const auto& g = by_flow.at(f.flow_id);
    inv = std::max({inv, std::abs(g.mean_delay - f.mean_delay) / f.mean_delay, std::abs(g.loss_ratio - f.loss_ratio)});
  }

  auto chain = fixture::chain(6, 1e6);
  chain.flows.push_back(fixture::path_flow(0, chain, {0, 1, 2, 3, 4, 5}, TrafficDescriptor::poisson(300)));
  chain.flows.push_back(fixture::path_flow(1, chain, {2, 3, 4}, TrafficDescriptor::autocorr_exp(200, 0.5, 3)));
  gnn::Model full = gnn::Model::create({chain}, gnn::Hyper{}, gnn::Target::kDelay, 5);
  full.hyper.l_max = 6;
  const auto ref = gnn::forward(full, chain);
  double seg_err = 0.0;
  for (const int l_max : {1, 2, 3, 4, 5}) {
    gnn::Model seg = full;
    seg.hyper.l_max = l_max;
    const auto out = gnn::forward(seg, chain);
    for (std::size_t q = 0; q < ref.occupancy.size(); ++q) {
      seg_err = std::max({seg_err, std::abs(out.occupancy[q] - ref.occupancy[q]), std::abs(out.jitter[q] - ref.jitter[q])});
    }
    for (std::size_t f = 0; f < ref.loss.size(); ++f) seg_err = std::max(seg_err, std::abs(out.loss[f] - ref.loss[f]));
  }

  const auto toy = fixture::toy_dataset(100, 17);
  const gnn::Model m0 = gnn::Model::create(toy, gnn::Hyper{}, gnn::Target::kDelay, 7);
  gnn::TrainOptions opt;
  opt.epochs = 200;
  opt.batch_size = 4;
  opt.lr = 3e-3;
  opt.seed = 7;
  const auto r1 = gnn::train(m0, toy, {}, opt);
  const auto r2 = gnn::train(m0, toy, {}, opt);
  const bool deterministic = r1.model.params.values() == r2.model.params.values();
  const double mse0 = mean_delay_mse(m0, toy), mse1 = mean_delay_mse(r1.model, toy);
  const double obj0 = gnn::evaluate(m0, toy), obj1 = gnn::evaluate(r1.model, toy);
  o.notes.push_back(fmt("toy set %zu samples: delay MSE %.3e -> %.3e (x%.1f), relative objective %.4f -> %.5f (x%.1f), "
                        "best epoch %d",
                        toy.size(), mse0, mse1, mse0 / mse1, obj0, obj1, obj0 / obj1, r1.best_epoch));
  const double secs = seconds_since(t0);
  o.require(grad_err < kC7GradTol, fmt("gradient error %.3g", grad_err));
  o.require(inv <= kC7InvTol, fmt("permutation difference %.3g", inv));
  o.require(seg_err <= kC7InvTol, fmt("segmentation difference %.3g", seg_err));
  o.require(mse0 / mse1 >= kC7Reduction, fmt("delay MSE reduction x%.2f", mse0 / mse1));
  o.require(deterministic, "training not deterministic per seed");
  o.require(secs < kC7Seconds, fmt("runtime %.0f s", secs));
  o.detail = fmt("grad err %.1e (tol 1e-4), permutation %.1e, L_max %.1e (tol 1e-6), delay MSE x%.1f (>= 10), "
                 "deterministic %s, %.0f s",
                 grad_err, inv, seg_err, mse0 / mse1, deterministic ? "yes" : "no", secs);
  return o;
}

// ---------------------------------------------------------------------------
// 8-10. trained model against the queueing model

struct Bench {
  gnn::Model model;
  std::vector<NetworkSample> poisson, autocorr, large;
  double train_seconds = 0.0;
  int best_epoch = 0;
  std::size_t train_samples = 0;
};

constexpr std::uint64_t kTrainPackets = 300'000;
constexpr std::uint64_t kTestPackets = 1'000'000;
constexpr int kTrainCount = 300;
constexpr int kEpochs = 100;
constexpr int kTestCount = 20;
constexpr int kLargeCount = 18;

datagen::GenConfig bench_config() {
  datagen::GenConfig cfg;
  cfg.seed = 101;
  cfg.min_nodes = 8;
  cfg.max_nodes = 24;
  cfg.policy_mix = {1, 0, 0, 0};
  cfg.buffer_sizes = {16, 32};
  cfg.ar_a = {0.5, 0.99};
  return cfg;
}

sim::SimOptions bench_sim(std::uint64_t packets, std::uint64_t seed) {
  sim::SimOptions o;
  o.seed = seed;
  o.packet_budget = packets;
  o.sizes = sim::PacketSizeModel::kFixed;
  return o;
}

const Bench& bench() {
  static std::optional<Bench> b;
  if (b) return *b;
  b.emplace();
  const auto cfg = bench_config();
  auto t0 = Clock::now();
  const auto train = datagen::build_dataset(cfg, kTrainCount, bench_sim(kTrainPackets, 0)).samples;
  std::printf("  [bench] %zu training samples labeled in %.0f s\n", train.size(), seconds_since(t0));

  // held-out topology, never used for training
  const Topology unseen = datagen::generate_topology(17, cfg.alpha, cfg.beta, 999);
  auto test_set = [&](TrafficModel model, std::uint64_t base) {
    auto c = cfg;
    c.traffic_mix = {0, 0, 0, 0, 0};
    c.traffic_mix[static_cast<int>(model)] = 1;
    if (model == TrafficModel::kAutocorrExp) c.ar_a = {0.9, 0.99};
    std::vector<NetworkSample> out;
    for (int i = 0; i < kTestCount; ++i) {
      auto s = datagen::generate_sample(c, derive_seed(base, i), unseen);
      s.labels = sim::run(s, bench_sim(kTestPackets, derive_seed(base + 1, i))).labels;
      out.push_back(std::move(s));
    }
    return out;
  };
  t0 = Clock::now();
  b->poisson = test_set(TrafficModel::kPoisson, 555);
  b->autocorr = test_set(TrafficModel::kAutocorrExp, 558);

  auto large = cfg;
  large.seed = 909;
  large.min_nodes = 50;
  large.max_nodes = 100;
  for (int i = 0; i < kLargeCount; ++i) {
    // sizes spread evenly over the range
    auto c = large;
    c.min_nodes = c.max_nodes = 50 + (50 * i) / (kLargeCount - 1);
    auto s = datagen::generate_sample(c, derive_seed(large.seed, i));
    s.labels = sim::run(s, bench_sim(kTestPackets, derive_seed(large.seed + 1, i))).labels;
    b->large.push_back(std::move(s));
  }
  std::printf("  [bench] test sets labeled in %.0f s\n", seconds_since(t0));

  const auto split = datagen::split_by_topology(train, 0.1, 3);
  const auto m0 = gnn::Model::create(split.first, gnn::Hyper{}, gnn::Target::kDelay, 7);
  gnn::TrainOptions opt;
  opt.epochs = kEpochs;
  opt.batch_size = 4;
  opt.lr = 3e-3;
  opt.lr_decay = 0.98;
  opt.seed = 7;
  t0 = Clock::now();
  const auto r = gnn::train(m0, split.first, split.second, opt);
  b->train_seconds = seconds_since(t0);
  b->model = r.model;
  b->best_epoch = r.best_epoch;
  b->train_samples = split.first.size();
  std::printf("  [bench] trained on %zu samples (%zu validation), best epoch %d, %.0f s\n", split.first.size(),
              split.second.size(), r.best_epoch, b->train_seconds);
  return *b;
}

report::Report run_engines(const std::vector<NetworkSample>& data, const gnn::Model& model) {
  report::BenchmarkOptions opt;
  opt.engines = {"qt", "gnn"};
  opt.models = {model};
  opt.size_bucket_width = 10;
  return report::benchmark(data, opt);
}

double mean_error(const report::Report& r, const std::string& engine) {
  return report::overall_table(r).at(engine).at("delay").front().second.mean;
}

Outcome criterion8() {
  Outcome o;
  const Bench& b = bench();
  const auto rp = run_engines(b.poisson, b.model);
  const auto ra = run_engines(b.autocorr, b.model);
  const double qp = mean_error(rp, "qt"), gp = mean_error(rp, "gnn");
  const double qa = mean_error(ra, "qt"), ga = mean_error(ra, "gnn");
  o.notes.push_back(fmt("Poisson, %d samples on an unseen 17-node topology: QT %.4f, GNN %.4f", kTestCount, qp, gp));
  o.notes.push_back(fmt("AutocorrExp a in [0.9, 0.99]: QT %.4f, GNN %.4f, ratio QT/GNN %.2f", qa, ga, qa / ga));
  o.require(gp <= qp, "GNN Poisson delay error above QT");
  o.require(2.0 * ga <= qa, "GNN AutocorrExp delay error not at most half of QT");
  o.detail = fmt("Poisson GNN %.4f <= QT %.4f; AutocorrExp GNN %.4f vs QT/2 %.4f", gp, qp, ga, qa / 2.0);
  return o;
}

Outcome criterion9() {
  Outcome o;
  const Bench& b = bench();
  const auto r = run_engines(b.large, b.model);
  const auto table = report::size_table(r);
  const auto& rows = table.at("gnn").at("delay");
  bool finite = true;
  for (const auto& row : r.rows) finite = finite && std::isfinite(row.rel_error);
  o.notes.push_back("size bucket   GNN mean   median   q3      QT mean   flows");
  const auto& qrows = table.at("qt").at("delay");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& st = rows[i].second;
    o.notes.push_back(fmt("%-12s  %.4f     %.4f   %.4f  %.4f    %d", rows[i].first.c_str(), st.mean, st.median, st.q3,
                          qrows[i].second.mean, st.count));
  }
  const double small = rows.front().second.mean, big = rows.back().second.mean;
  o.require(finite, "non-finite error");
  o.require(big <= 3.0 * small, fmt("largest bucket %.4f > 3 x smallest %.4f", big, small));
  o.detail = fmt("largest bucket %s %.4f <= 3 x smallest %s %.4f", rows.back().first.c_str(), big,
                 rows.front().first.c_str(), small);
  return o;
}

Outcome criterion10() {
  Outcome o;
  const Bench& b = bench();
  std::vector<const NetworkSample*> all;
  for (const auto* set : {&b.poisson, &b.autocorr, &b.large}) {
    for (const auto& s : *set) all.push_back(&s);
  }
  double qt_max = 0.0, gnn_max = 0.0, qt_sum = 0.0, gnn_sum = 0.0;
  int biggest = 0;
  for (const auto* s : all) {
    biggest = std::max(biggest, static_cast<int>(s->topology.nodes.size()));
    auto t0 = Clock::now();
    (void)qt::solve(*s);
    const double q = seconds_since(t0);
    t0 = Clock::now();
    (void)gnn::infer(b.model, *s);
    const double g = seconds_since(t0);
    qt_max = std::max(qt_max, q);
    gnn_max = std::max(gnn_max, g);
    qt_sum += q;
    gnn_sum += g;
  }
  const double n = static_cast<double>(all.size());
  o.notes.push_back(fmt("%zu samples up to %d nodes: QT mean %.1f ms max %.1f ms; GNN mean %.1f ms max %.1f ms",
                        all.size(), biggest, 1e3 * qt_sum / n, 1e3 * qt_max, 1e3 * gnn_sum / n, 1e3 * gnn_max));
  o.require(qt_max < 1.0, fmt("QT %.2f s", qt_max));
  o.require(gnn_max < 1.0, fmt("GNN %.2f s", gnn_max));
  o.detail = fmt("max per-sample QT %.1f ms, GNN %.1f ms (bound 1000 ms)", 1e3 * qt_max, 1e3 * gnn_max);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    if (!o.pass) ++failed;
    std::printf("CRITERION %d %s (%.1f s): %s\n", id, o.pass ? "PASS" : "FAIL", seconds_since(t0), o.detail.c_str());
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
